#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "eegcid/types.hpp"

namespace eegcid {

// Canonical on-disk layout, both stages:
//   manifest.json              stage, sampling rate, per-subject shapes
//   profiles.csv               subject_id,dominance,sex,music_education,active_musician
// raw stage, per subject:
//   eeg_<id>.f64               row-major C x N little-endian doubles
//   events_<id>.csv            sample_index,label,condition
// preprocessed stage, per subject:
//   epochs_<id>.f64            row-major E x C x T little-endian doubles
//   epoch_meta_<id>.csv        label,condition,degenerate
//
// Everything is regenerable with text tools plus one flat binary per subject;
// saves are byte-deterministic for a given dataset.

Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);

// Imports a WithMe-style export directory into the canonical layout:
//   profiles.csv plus per subject <id>_eeg.csv (wide, header = channel names)
//   and <id>_events.csv (sample_index,label,condition). Mastoid channels are
//   picked by name. Kept separate from the canonical loader on purpose; all
//   source-layout quirks are absorbed here.
void import_withme(const std::filesystem::path& src, const std::filesystem::path& dst,
                   double fs, const std::vector<std::string>& mastoid_names);

// Minimal CSV helpers shared by the loaders (no quoting; fields must not
// contain commas or newlines).
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& file);
void write_file_atomic(const std::filesystem::path& file, const std::string& content);

}  // namespace eegcid

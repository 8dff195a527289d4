#include "eegcid/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "eegcid/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "f64 payload files are little-endian; big-endian hosts are unsupported");

namespace eegcid {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<double> read_f64(const fs::path& file, size_t expected) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  std::vector<double> v(expected);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(expected * sizeof(double)));
  if (static_cast<size_t>(in.gcount()) != expected * sizeof(double))
    throw IoError(file.string() + ": truncated, expected " + std::to_string(expected) + " doubles");
  char probe;
  if (in.read(&probe, 1))
    throw IoError(file.string() + ": trailing bytes beyond expected payload");
  return v;
}

void write_f64(const fs::path& file, const std::vector<double>& v) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!out) throw IoError("short write to " + file.string());
}

void check_field(const std::string& s, const char* what) {
  if (s.empty()) throw ValidationError(std::string(what) + " must not be empty");
  if (s.find(',') != std::string::npos || s.find('\n') != std::string::npos ||
      s.find('\r') != std::string::npos)
    throw ValidationError(std::string(what) + " '" + s + "' contains a comma or newline");
}

std::string profiles_csv(const Dataset& ds) {
  std::string out = "subject_id,dominance,sex,music_education,active_musician\n";
  for (const auto& [id, p] : ds.profiles) {
    check_field(id, "subject_id");
    out += id + "," + to_string(p.dominance) + "," + std::to_string(p.sex) + "," +
           std::to_string(p.music_education) + "," + std::to_string(p.active_musician) + "\n";
  }
  return out;
}

void parse_profiles(const fs::path& file, Dataset& ds) {
  auto rows = read_csv(file);
  if (rows.empty() || rows[0] != std::vector<std::string>{"subject_id", "dominance", "sex",
                                                          "music_education", "active_musician"})
    throw ValidationError(file.string() + ": bad or missing header");
  for (size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != 5)
      throw ValidationError(file.string() + ": row " + std::to_string(i) + " has " +
                            std::to_string(r.size()) + " fields, expected 5");
    SubjectProfile p;
    p.subject_id = r[0];
    p.dominance = dominance_from_string(r[1]);
    p.sex = std::stoi(r[2]);
    p.music_education = std::stoi(r[3]);
    p.active_musician = std::stoi(r[4]);
    validate_profile(p);
    if (!ds.profiles.emplace(p.subject_id, p).second)
      throw ValidationError(file.string() + ": duplicate profile for '" + p.subject_id + "'");
  }
}

}  // namespace

std::vector<std::vector<std::string>> read_csv(const fs::path& file) {
  const std::string text = read_text(file);
  std::vector<std::vector<std::string>> rows;
  std::string cell;
  std::vector<std::string> row;
  for (char ch : text) {
    if (ch == '\r') continue;
    if (ch == ',') {
      row.push_back(cell);
      cell.clear();
    } else if (ch == '\n') {
      row.push_back(cell);
      cell.clear();
      rows.push_back(row);
      row.clear();
    } else {
      cell += ch;
    }
  }
  if (!cell.empty() || !row.empty()) {
    row.push_back(cell);
    rows.push_back(row);
  }
  return rows;
}

void write_file_atomic(const fs::path& file, const std::string& content) {
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, file);
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  validate_dataset(ds);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());

  json manifest;
  manifest["format"] = "eegcid-dataset";
  manifest["version"] = 1;
  manifest["stage"] = ds.stage == Stage::raw ? "raw" : "preprocessed";

  if (ds.stage == Stage::raw) {
    json subjects = json::array();
    for (const RawRecording& r : ds.recordings) {
      check_field(r.subject_id, "subject_id");
      json s;
      s["id"] = r.subject_id;
      s["channels"] = r.channels;
      s["n_samples"] = r.n_samples;
      s["fs"] = r.fs;
      s["channel_names"] = r.channel_names;
      s["mastoid_indices"] = r.mastoid_indices;
      s["n_events"] = r.events.size();
      subjects.push_back(s);

      write_f64(dir / ("eeg_" + r.subject_id + ".f64"), r.samples);
      std::string ev = "sample_index,label,condition\n";
      for (const Event& e : r.events)
        ev += std::to_string(e.sample_index) + "," + to_string(e.label) + "," +
              to_string(e.condition) + "\n";
      write_file_atomic(dir / ("events_" + r.subject_id + ".csv"), ev);
    }
    manifest["subjects"] = subjects;
  } else {
    // Group epochs by subject, preserving order within each subject. Every
    // profiled subject gets an entry, even with zero epochs.
    std::map<std::string, std::vector<const TrialEpoch*>> by_subject;
    for (const auto& [id, p] : ds.profiles) by_subject[id];
    for (const TrialEpoch& e : ds.epochs) by_subject[e.subject_id].push_back(&e);
    json subjects = json::array();
    for (const auto& [id, eps] : by_subject) {
      check_field(id, "subject_id");
      const int C = eps.empty() ? 0 : eps.front()->channels;
      const int T = eps.empty() ? 0 : eps.front()->n_samples;
      std::vector<double> blob;
      blob.reserve(eps.size() * static_cast<size_t>(C) * T);
      std::string meta = "label,condition,degenerate\n";
      for (const TrialEpoch* e : eps) {
        if (e->channels != C || e->n_samples != T)
          throw ValidationError("subject '" + id + "': epochs have mixed shapes");
        blob.insert(blob.end(), e->data.begin(), e->data.end());
        meta += to_string(e->label) + "," + to_string(e->condition) + "," +
                std::to_string(e->degenerate ? 1 : 0) + "\n";
      }
      json s;
      s["id"] = id;
      s["channels"] = C;
      s["epoch_len"] = T;
      s["n_epochs"] = eps.size();
      subjects.push_back(s);
      write_f64(dir / ("epochs_" + id + ".f64"), blob);
      write_file_atomic(dir / ("epoch_meta_" + id + ".csv"), meta);
    }
    manifest["subjects"] = subjects;
  }

  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
  write_file_atomic(dir / "profiles.csv", profiles_csv(ds));
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path mf = dir / "manifest.json";
  if (!fs::exists(mf)) throw ValidationError("missing manifest: " + mf.string());
  json manifest;
  try {
    manifest = json::parse(read_text(mf));
  } catch (const json::exception& e) {
    throw ValidationError(mf.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "eegcid-dataset")
    throw ValidationError(mf.string() + ": not an eegcid dataset manifest");
  const std::string stage = manifest.value("stage", "");
  if (stage != "raw" && stage != "preprocessed")
    throw ValidationError(mf.string() + ": unknown stage '" + stage + "'");
  if (!manifest.contains("subjects") || !manifest["subjects"].is_array())
    throw ValidationError(mf.string() + ": missing subjects array");
  if (manifest["subjects"].empty()) throw ValidationError(mf.string() + ": empty dataset");

  Dataset ds;
  ds.stage = stage == "raw" ? Stage::raw : Stage::preprocessed;
  parse_profiles(dir / "profiles.csv", ds);

  for (const json& s : manifest["subjects"]) {
    const std::string id = s.at("id").get<std::string>();
    if (!ds.profiles.count(id))
      throw ValidationError("profile missing for listed subject '" + id + "'");
    if (ds.stage == Stage::raw) {
      RawRecording r;
      r.subject_id = id;
      r.channels = s.at("channels").get<int>();
      r.n_samples = s.at("n_samples").get<int64_t>();
      r.fs = s.at("fs").get<double>();
      r.channel_names = s.at("channel_names").get<std::vector<std::string>>();
      r.mastoid_indices = s.at("mastoid_indices").get<std::vector<int>>();
      r.samples = read_f64(dir / ("eeg_" + id + ".f64"),
                           static_cast<size_t>(r.channels) * static_cast<size_t>(r.n_samples));
      auto rows = read_csv(dir / ("events_" + id + ".csv"));
      if (rows.empty() || rows[0] != std::vector<std::string>{"sample_index", "label", "condition"})
        throw ValidationError("events_" + id + ".csv: bad or missing header");
      for (size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 3)
          throw ValidationError("events_" + id + ".csv: row " + std::to_string(i) + " malformed");
        Event e;
        e.sample_index = std::stoll(rows[i][0]);
        e.label = label_from_string(rows[i][1]);
        e.condition = condition_from_string(rows[i][2]);
        r.events.push_back(e);
      }
      if (r.events.size() != s.at("n_events").get<size_t>())
        throw ValidationError("subject '" + id + "': event count disagrees with manifest");
      validate_recording(r);
      ds.recordings.push_back(std::move(r));
    } else {
      const int C = s.at("channels").get<int>();
      const int T = s.at("epoch_len").get<int>();
      const size_t E = s.at("n_epochs").get<size_t>();
      auto blob = read_f64(dir / ("epochs_" + id + ".f64"), E * static_cast<size_t>(C) * T);
      auto rows = read_csv(dir / ("epoch_meta_" + id + ".csv"));
      if (rows.empty() || rows[0] != std::vector<std::string>{"label", "condition", "degenerate"})
        throw ValidationError("epoch_meta_" + id + ".csv: bad or missing header");
      if (rows.size() - 1 != E)
        throw ValidationError("subject '" + id + "': epoch meta row count disagrees with manifest");
      for (size_t k = 0; k < E; ++k) {
        TrialEpoch e;
        e.subject_id = id;
        e.channels = C;
        e.n_samples = T;
        e.label = label_from_string(rows[k + 1][0]);
        e.condition = condition_from_string(rows[k + 1][1]);
        e.degenerate = rows[k + 1][2] == "1";
        const size_t off = k * static_cast<size_t>(C) * T;
        e.data.assign(blob.begin() + off, blob.begin() + off + static_cast<size_t>(C) * T);
        ds.epochs.push_back(std::move(e));
      }
    }
  }
  validate_dataset(ds);
  return ds;
}

void import_withme(const fs::path& src, const fs::path& dst, double fs,
                   const std::vector<std::string>& mastoid_names) {
  Dataset ds;
  ds.stage = Stage::raw;
  parse_profiles(src / "profiles.csv", ds);
  if (ds.profiles.empty()) throw ValidationError(src.string() + ": no profiles");

  for (const auto& [id, p] : ds.profiles) {
    const fs::path eeg_csv = src / (id + "_eeg.csv");
    const fs::path ev_csv = src / (id + "_events.csv");
    auto rows = read_csv(eeg_csv);
    if (rows.size() < 2) throw ValidationError(eeg_csv.string() + ": no samples");

    RawRecording r;
    r.subject_id = id;
    r.fs = fs;
    r.channel_names = rows[0];
    r.channels = static_cast<int>(rows[0].size());
    r.n_samples = static_cast<int64_t>(rows.size()) - 1;
    r.samples.resize(static_cast<size_t>(r.channels) * r.n_samples);
    for (int64_t t = 0; t < r.n_samples; ++t) {
      const auto& row = rows[static_cast<size_t>(t) + 1];
      if (row.size() != static_cast<size_t>(r.channels))
        throw ValidationError(eeg_csv.string() + ": ragged row " + std::to_string(t + 1));
      for (int c = 0; c < r.channels; ++c) r.at(c, t) = std::stod(row[static_cast<size_t>(c)]);
    }
    for (const std::string& name : mastoid_names) {
      auto it = std::find(r.channel_names.begin(), r.channel_names.end(), name);
      if (it == r.channel_names.end())
        throw ValidationError(eeg_csv.string() + ": mastoid channel '" + name + "' not found");
      r.mastoid_indices.push_back(static_cast<int>(it - r.channel_names.begin()));
    }

    auto evrows = read_csv(ev_csv);
    if (evrows.empty() || evrows[0] != std::vector<std::string>{"sample_index", "label", "condition"})
      throw ValidationError(ev_csv.string() + ": bad or missing header");
    for (size_t i = 1; i < evrows.size(); ++i) {
      Event e;
      e.sample_index = std::stoll(evrows[i][0]);
      e.label = label_from_string(evrows[i][1]);
      e.condition = condition_from_string(evrows[i][2]);
      r.events.push_back(e);
    }
    validate_recording(r);
    ds.recordings.push_back(std::move(r));
  }
  save_dataset(ds, dst);
}

}  // namespace eegcid

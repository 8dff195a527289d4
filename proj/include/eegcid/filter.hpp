#pragma once

#include <vector>

namespace eegcid {

// One second-order section, direct form II transposed. a0 is normalized to 1.
struct Biquad {
  double b0 = 0, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};

using Sos = std::vector<Biquad>;

// Butterworth band-pass via analog prototype + band transform + bilinear
// mapping. `order` is the low-pass prototype order (must be even here), so
// the resulting band-pass has 2*order poles per pass. Gain is normalized to
// exactly 1 at the warped geometric center of the band.
Sos butter_bandpass(int order, double low_hz, double high_hz, double fs);

// |H(e^{j 2 pi f / fs})| of the cascade.
double sos_magnitude(const Sos& sos, double freq_hz, double fs);

// Single forward pass with given per-section initial state scale. States are
// seeded with the steady-state response to a constant input x0, which makes
// the filter transient-free for constant signals.
void sos_forward(const Sos& sos, std::vector<double>& x);

// Zero-phase filtering: odd-reflection padding of pad_len samples on both
// ends, forward pass, reverse, forward pass, reverse, unpad. pad_len defaults
// to 3x the settle length (2 * total pole count + 1).
std::vector<double> sos_filtfilt(const Sos& sos, const std::vector<double>& x, int pad_len = -1);

int sos_settle_len(const Sos& sos);

}  // namespace eegcid

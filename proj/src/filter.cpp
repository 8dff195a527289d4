#include "eegcid/filter.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>

#include "eegcid/common.hpp"

namespace eegcid {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = 3.14159265358979323846;

// Steady-state DF2T internal state for constant input u = 1, so that
// feeding the section a constant produces its DC response from sample 0.
void biquad_zi(const Biquad& q, double& z1, double& z2) {
  const double h = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
  z2 = q.b2 - q.a2 * h;
  z1 = q.b1 - q.a1 * h + z2;
}

// Runs the cascade once. Each section's state is seeded from the first
// sample of the signal entering that section; for a constant input the
// whole cascade is transient-free.
void cascade_forward(const Sos& sos, std::vector<double>& x) {
  if (x.empty()) return;
  for (const Biquad& q : sos) {
    const double x0 = x.front();
    double z1, z2;
    biquad_zi(q, z1, z2);
    z1 *= x0;
    z2 *= x0;
    for (double& s : x) {
      const double in = s;
      const double out = q.b0 * in + z1;
      z1 = q.b1 * in - q.a1 * out + z2;
      z2 = q.b2 * in - q.a2 * out;
      s = out;
    }
  }
}

}  // namespace

Sos butter_bandpass(int order, double low_hz, double high_hz, double fs) {
  if (order < 2 || order % 2 != 0)
    throw ValidationError("filter order must be even and >= 2");
  if (!(0.0 < low_hz && low_hz < high_hz && high_hz < fs / 2.0))
    throw ValidationError("band edges must satisfy 0 < low < high < fs/2");

  // Pre-warped analog edge frequencies for the bilinear transform.
  const double w1 = 2.0 * fs * std::tan(kPi * low_hz / fs);
  const double w2 = 2.0 * fs * std::tan(kPi * high_hz / fs);
  const double w0sq = w1 * w2;
  const double bw = w2 - w1;

  // Low-pass prototype poles on the unit circle, then band transform:
  // each prototype pole p yields the two roots of s^2 - p*bw*s + w0^2 = 0.
  std::vector<cplx> zpoles;
  for (int k = 0; k < order; ++k) {
    const double theta = kPi * (2.0 * k + order + 1.0) / (2.0 * order);
    const cplx p(std::cos(theta), std::sin(theta));
    const cplx pb = p * bw;
    const cplx disc = std::sqrt(pb * pb - 4.0 * w0sq);
    for (const cplx s : {(pb + disc) * 0.5, (pb - disc) * 0.5}) {
      // Bilinear: z = (2fs + s) / (2fs - s).
      zpoles.push_back((2.0 * fs + s) / (2.0 * fs - s));
    }
  }

  // Pair conjugate poles into real biquads. Sort so pairing is deterministic.
  std::sort(zpoles.begin(), zpoles.end(), [](const cplx& a, const cplx& b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return std::abs(a.imag()) < std::abs(b.imag());
  });
  std::vector<cplx> upper;
  for (const cplx& p : zpoles)
    if (p.imag() >= 0.0) upper.push_back(p);
  if (upper.size() != static_cast<size_t>(order))
    throw std::logic_error("pole pairing failed");

  // 2*order zeros: order at z=+1 and order at z=-1, one (z-1)(z+1) per section.
  Sos sos;
  for (const cplx& p : upper) {
    Biquad q;
    q.b0 = 1.0;
    q.b1 = 0.0;
    q.b2 = -1.0;
    q.a1 = -2.0 * p.real();
    q.a2 = std::norm(p);
    sos.push_back(q);
  }

  // Normalize so |H| = 1 exactly at the warped center frequency.
  const double f_center = fs / kPi * std::atan(std::sqrt(w0sq) / (2.0 * fs));
  const double g = sos_magnitude(sos, f_center, fs);
  const double scale = std::pow(1.0 / g, 1.0 / static_cast<double>(sos.size()));
  for (Biquad& q : sos) {
    q.b0 *= scale;
    q.b1 *= scale;
    q.b2 *= scale;
  }
  return sos;
}

double sos_magnitude(const Sos& sos, double freq_hz, double fs) {
  const cplx z = std::polar(1.0, 2.0 * kPi * freq_hz / fs);
  const cplx zi = 1.0 / z;
  cplx h(1.0, 0.0);
  for (const Biquad& q : sos) {
    h *= (q.b0 + q.b1 * zi + q.b2 * zi * zi) / (1.0 + q.a1 * zi + q.a2 * zi * zi);
  }
  return std::abs(h);
}

int sos_settle_len(const Sos& sos) {
  return 2 * static_cast<int>(sos.size()) * 2 + 1;
}

void sos_forward(const Sos& sos, std::vector<double>& x) { cascade_forward(sos, x); }

std::vector<double> sos_filtfilt(const Sos& sos, const std::vector<double>& x, int pad_len) {
  const int n = static_cast<int>(x.size());
  if (pad_len < 0) pad_len = 3 * sos_settle_len(sos);
  if (n < 2) return x;
  pad_len = std::min(pad_len, n - 1);

  // Odd reflection about the end samples: keeps level and slope continuous.
  std::vector<double> ext;
  ext.reserve(x.size() + 2 * static_cast<size_t>(pad_len));
  for (int i = pad_len; i >= 1; --i) ext.push_back(2.0 * x.front() - x[static_cast<size_t>(i)]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (int i = 1; i <= pad_len; ++i)
    ext.push_back(2.0 * x.back() - x[static_cast<size_t>(n - 1 - i)]);

  cascade_forward(sos, ext);
  std::reverse(ext.begin(), ext.end());
  cascade_forward(sos, ext);
  std::reverse(ext.begin(), ext.end());

  return {ext.begin() + pad_len, ext.begin() + pad_len + n};
}

}  // namespace eegcid

#pragma once

#include <complex>
#include <filesystem>
#include <vector>

#include "sigadv/signal_data.hpp"

namespace sigadv {

enum class WindowKind { Blackman };

struct StftConfig {
    int n_fft = 2048;      // power of two; window length equals n_fft
    int overlap = 48;      // samples shared by adjacent frames
    WindowKind window_kind = WindowKind::Blackman;

    int win_len() const { return n_fft; }
    int hop() const { return n_fft - overlap; }
    void validate() const;
};

/// Full complex STFT matrix: n_fft frequency bins x frames.
struct TimeFreqMatrix {
    int n_fft = 0;
    int frames = 0;
    std::vector<std::complex<double>> v;
    StftConfig config;

    std::complex<double>& at(int k, int m) { return v[static_cast<std::size_t>(m) * n_fft + k]; }
    const std::complex<double>& at(int k, int m) const {
        return v[static_cast<std::size_t>(m) * n_fft + k];
    }
};

/// Real n_fft x frames matrix; used for magnitudes, phases and gradients.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}
    double& at(int r, int c) { return v[static_cast<std::size_t>(c) * rows + r]; }
    const double& at(int r, int c) const { return v[static_cast<std::size_t>(c) * rows + r]; }
    std::size_t size() const { return v.size(); }
};

using MagnitudeMatrix = Matrix;
using PhaseMatrix = Matrix;

struct DbMapping {
    double db_min = -80.0;
    double db_max = 0.0;
    double epsilon = 1e-10;  // floor inside the log

    void validate() const;
    /// Freeze the mapping from a magnitude matrix: (max_db - range_db, max_db).
    static DbMapping from_magnitude(const MagnitudeMatrix& mag, double range_db = 80.0,
                                    double epsilon = 1e-10);
};

/// Grayscale detector input; H = n_fft/2 positive-frequency bins, row 0 is the
/// highest frequency. Pixels in [0, 1].
struct SpectrogramImage {
    int h = 0;
    int w = 0;
    std::vector<double> pixels;
    DbMapping mapping;

    double& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * w + c]; }
    const double& at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * w + c]; }
};

/// In-place radix-2 FFT; size must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a, bool inverse);

/// Blackman coefficients: 0.42 - 0.5 cos(2pi n/(L-1)) + 0.08 cos(4pi n/(L-1)).
std::vector<double> make_window(const StftConfig& config);

/// Frame m covers samples [m*hop, m*hop + win_len); no padding.
TimeFreqMatrix stft(const SignalBuffer& signal, const StftConfig& config);

struct IstftResult {
    SignalBuffer signal;
    double imag_residue = 0.0;  // relative L2 of the discarded imaginary part
};

/// Weighted overlap-add with window-squared normalization (floor 1e-8).
/// Samples beyond the covered region [0, (M-1)*hop + win_len) are zero-filled.
IstftResult istft(const TimeFreqMatrix& matrix, const StftConfig& config, std::size_t out_len);

std::pair<MagnitudeMatrix, PhaseMatrix> split(const TimeFreqMatrix& matrix);
TimeFreqMatrix recombine(const MagnitudeMatrix& mag, const PhaseMatrix& phase,
                         const StftConfig& config);

/// db = 20 log10(mag + eps); pixel = clamp((db - db_min)/(db_max - db_min), 0, 1).
SpectrogramImage to_grayscale(const MagnitudeMatrix& mag, const DbMapping& mapping);

/// Pulls an H x W pixel gradient back to the full n_fft x frames magnitude
/// matrix; zero where the mapping clamped, mirrored onto negative-frequency
/// bins so that symmetric updates keep the reconstruction real.
Matrix grayscale_grad(const MagnitudeMatrix& mag, const DbMapping& mapping,
                      const Matrix& upstream);

/// Binary PGM (P5), 8-bit, pixel = round(255*value).
void write_pgm(const SpectrogramImage& image, const std::filesystem::path& path);

/// Frobenius norms restricted to the positive-frequency half when requested.
double matrix_norm(const Matrix& m);
double tf_norm(const TimeFreqMatrix& m);

}  // namespace sigadv

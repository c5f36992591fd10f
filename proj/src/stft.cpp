#include "sigadv/stft.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "sigadv/common.hpp"

namespace sigadv {

namespace {

constexpr double kWolaFloor = 1e-8;

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

void StftConfig::validate() const {
    if (!is_pow2(n_fft)) throw std::invalid_argument("StftConfig: n_fft must be a power of two");
    if (overlap <= 0 || overlap >= win_len())
        throw std::invalid_argument("StftConfig: overlap must satisfy 0 < overlap < win_len");
    if (window_kind != WindowKind::Blackman)
        throw std::invalid_argument("StftConfig: unsupported window kind");
}

void DbMapping::validate() const {
    if (!(db_max > db_min)) throw std::invalid_argument("DbMapping: db_max must exceed db_min");
    if (!(epsilon > 0)) throw std::invalid_argument("DbMapping: epsilon must be positive");
}

DbMapping DbMapping::from_magnitude(const MagnitudeMatrix& mag, double range_db, double epsilon) {
    double max_db = -1e300;
    for (double m : mag.v) max_db = std::max(max_db, 20.0 * std::log10(m + epsilon));
    DbMapping out;
    out.db_max = max_db;
    out.db_min = max_db - range_db;
    out.epsilon = epsilon;
    out.validate();
    return out;
}

void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft_radix2: size must be a power of two");
    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> t = a[i + k + len / 2] * w;
                a[i + k] = u + t;
                a[i + k + len / 2] = u - t;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& x : a) x *= inv;
    }
}

std::vector<double> make_window(const StftConfig& config) {
    config.validate();
    const int l = config.win_len();
    if (l < 3) throw std::invalid_argument("make_window: win_len must be >= 3");
    std::vector<double> w(static_cast<std::size_t>(l));
    for (int n = 0; n < l; ++n) {
        const double t = static_cast<double>(n) / (l - 1);
        w[static_cast<std::size_t>(n)] =
            0.42 - 0.5 * std::cos(2 * kPi * t) + 0.08 * std::cos(4 * kPi * t);
    }
    return w;
}

TimeFreqMatrix stft(const SignalBuffer& signal, const StftConfig& config) {
    config.validate();
    const int win = config.win_len();
    const int hop = config.hop();
    if (signal.size() < static_cast<std::size_t>(win))
        throw std::invalid_argument("stft: signal shorter than one window");
    const int frames =
        static_cast<int>((signal.size() - static_cast<std::size_t>(win)) / hop) + 1;

    const std::vector<double> w = make_window(config);
    TimeFreqMatrix out;
    out.n_fft = config.n_fft;
    out.frames = frames;
    out.config = config;
    out.v.resize(static_cast<std::size_t>(config.n_fft) * frames);

    std::vector<std::complex<double>> frame(static_cast<std::size_t>(config.n_fft));
    for (int m = 0; m < frames; ++m) {
        const std::size_t base = static_cast<std::size_t>(m) * hop;
        for (int n = 0; n < win; ++n)
            frame[static_cast<std::size_t>(n)] = signal.samples[base + n] * w[static_cast<std::size_t>(n)];
        fft_radix2(frame, false);
        std::copy(frame.begin(), frame.end(),
                  out.v.begin() + static_cast<std::size_t>(m) * config.n_fft);
    }
    return out;
}

IstftResult istft(const TimeFreqMatrix& matrix, const StftConfig& config, std::size_t out_len) {
    config.validate();
    if (matrix.n_fft != config.n_fft)
        throw std::invalid_argument("istft: matrix/config dimension mismatch");
    if (matrix.v.size() != static_cast<std::size_t>(matrix.n_fft) * matrix.frames)
        throw std::invalid_argument("istft: malformed matrix");
    if (out_len == 0) throw std::invalid_argument("istft: out_len must be positive");

    const int win = config.win_len();
    const int hop = config.hop();
    const std::vector<double> w = make_window(config);

    std::vector<double> acc(out_len, 0.0);
    std::vector<double> imag_acc(out_len, 0.0);
    std::vector<double> den(out_len, 0.0);

    std::vector<std::complex<double>> frame(static_cast<std::size_t>(config.n_fft));
    for (int m = 0; m < matrix.frames; ++m) {
        std::copy(matrix.v.begin() + static_cast<std::size_t>(m) * config.n_fft,
                  matrix.v.begin() + static_cast<std::size_t>(m + 1) * config.n_fft,
                  frame.begin());
        fft_radix2(frame, true);
        const std::size_t base = static_cast<std::size_t>(m) * hop;
        for (int n = 0; n < win; ++n) {
            const std::size_t pos = base + static_cast<std::size_t>(n);
            if (pos >= out_len) break;
            const double wn = w[static_cast<std::size_t>(n)];
            acc[pos] += wn * frame[static_cast<std::size_t>(n)].real();
            imag_acc[pos] += wn * frame[static_cast<std::size_t>(n)].imag();
            den[pos] += wn * wn;
        }
    }

    IstftResult out;
    out.signal.sample_rate = 0;  // callers attach the rate they know
    out.signal.samples.resize(out_len);
    double imag_sq = 0.0, real_sq = 0.0;
    for (std::size_t i = 0; i < out_len; ++i) {
        const double d = std::max(den[i], kWolaFloor);
        out.signal.samples[i] = acc[i] / d;
        real_sq += acc[i] * acc[i];
        imag_sq += imag_acc[i] * imag_acc[i];
    }
    out.imag_residue = real_sq > 0 ? std::sqrt(imag_sq / real_sq) : std::sqrt(imag_sq);
    return out;
}

std::pair<MagnitudeMatrix, PhaseMatrix> split(const TimeFreqMatrix& matrix) {
    MagnitudeMatrix mag(matrix.n_fft, matrix.frames);
    PhaseMatrix phase(matrix.n_fft, matrix.frames);
    for (std::size_t i = 0; i < matrix.v.size(); ++i) {
        const auto& z = matrix.v[i];
        mag.v[i] = std::abs(z);
        phase.v[i] = (z.real() == 0.0 && z.imag() == 0.0) ? 0.0 : std::atan2(z.imag(), z.real());
    }
    return {std::move(mag), std::move(phase)};
}

TimeFreqMatrix recombine(const MagnitudeMatrix& mag, const PhaseMatrix& phase,
                         const StftConfig& config) {
    if (mag.rows != phase.rows || mag.cols != phase.cols)
        throw std::invalid_argument("recombine: dimension mismatch");
    TimeFreqMatrix out;
    out.n_fft = mag.rows;
    out.frames = mag.cols;
    out.config = config;
    out.v.resize(mag.size());
    for (std::size_t i = 0; i < mag.size(); ++i) {
        if (mag.v[i] < 0.0)
            throw std::invalid_argument("recombine: negative magnitude");
        out.v[i] = std::polar(mag.v[i], phase.v[i]);
    }
    return out;
}

SpectrogramImage to_grayscale(const MagnitudeMatrix& mag, const DbMapping& mapping) {
    mapping.validate();
    SpectrogramImage img;
    img.h = mag.rows / 2;
    img.w = mag.cols;
    img.mapping = mapping;
    img.pixels.resize(static_cast<std::size_t>(img.h) * img.w);
    const double range = mapping.db_max - mapping.db_min;
    for (int m = 0; m < mag.cols; ++m) {
        for (int k = 0; k < img.h; ++k) {
            const double db = 20.0 * std::log10(mag.at(k, m) + mapping.epsilon);
            const double p = std::clamp((db - mapping.db_min) / range, 0.0, 1.0);
            img.at(img.h - 1 - k, m) = p;  // row 0 = highest frequency
        }
    }
    return img;
}

Matrix grayscale_grad(const MagnitudeMatrix& mag, const DbMapping& mapping,
                      const Matrix& upstream) {
    mapping.validate();
    const int half = mag.rows / 2;
    if (upstream.rows != half || upstream.cols != mag.cols)
        throw std::invalid_argument("grayscale_grad: upstream dimension mismatch");
    const double range = mapping.db_max - mapping.db_min;
    const double scale = 20.0 / (std::log(10.0) * range);
    Matrix grad(mag.rows, mag.cols);
    for (int m = 0; m < mag.cols; ++m) {
        for (int k = 0; k < half; ++k) {
            const double v = mag.at(k, m);
            const double db = 20.0 * std::log10(v + mapping.epsilon);
            const double p = (db - mapping.db_min) / range;
            double g = 0.0;
            if (p > 0.0 && p < 1.0)
                g = upstream.at(half - 1 - k, m) * scale / (v + mapping.epsilon);
            grad.at(k, m) = g;
            if (k > 0) grad.at(mag.rows - k, m) = g;  // mirror; Nyquist bin stays zero
        }
    }
    return grad;
}

void write_pgm(const SpectrogramImage& image, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_pgm: cannot open " + path.string());
    out << "P5\n" << image.w << ' ' << image.h << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(image.w));
    for (int r = 0; r < image.h; ++r) {
        for (int c = 0; c < image.w; ++c)
            row[static_cast<std::size_t>(c)] =
                static_cast<unsigned char>(std::lround(255.0 * std::clamp(image.at(r, c), 0.0, 1.0)));
        out.write(reinterpret_cast<const char*>(row.data()), image.w);
    }
    if (!out) throw std::runtime_error("write_pgm: short write to " + path.string());
}

double matrix_norm(const Matrix& m) { return l2_norm(m.v); }

double tf_norm(const TimeFreqMatrix& m) {
    double acc = 0.0;
    for (const auto& z : m.v) acc += std::norm(z);
    return std::sqrt(acc);
}

}  // namespace sigadv

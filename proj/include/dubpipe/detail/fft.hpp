#pragma once

// Thin RAII wrapper over FFTW's real-input transforms. Planning is serialized
// through a process-wide mutex (FFTW's planner is not reentrant); execution
// itself runs on caller-owned buffers and is safe from any thread.

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include <fftw3.h>

namespace dubpipe::detail {

class RealFft {
public:
    explicit RealFft(std::size_t size) : size_(size) {
        std::lock_guard lock(planner_mutex());
        in_ = static_cast<double*>(fftw_malloc(sizeof(double) * size));
        out_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins()));
        const int n = static_cast<int>(size);
        forward_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
        inverse_ = fftw_plan_dft_c2r_1d(n, out_, in_, FFTW_ESTIMATE);
    }

    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    ~RealFft() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(inverse_);
        fftw_free(in_);
        fftw_free(out_);
    }

    std::size_t size() const noexcept { return size_; }
    std::size_t bins() const noexcept { return size_ / 2 + 1; }

    void forward(std::span<const double> time, std::span<std::complex<double>> spectrum) {
        std::copy(time.begin(), time.end(), in_);
        fftw_execute(forward_);
        for (std::size_t k = 0; k < bins(); ++k) spectrum[k] = {out_[k][0], out_[k][1]};
    }

    // Unnormalized: forward followed by inverse scales by size().
    void inverse(std::span<const std::complex<double>> spectrum, std::span<double> time) {
        for (std::size_t k = 0; k < bins(); ++k) {
            out_[k][0] = spectrum[k].real();
            out_[k][1] = spectrum[k].imag();
        }
        fftw_execute(inverse_);
        std::copy(in_, in_ + size_, time.begin());
    }

private:
    static std::mutex& planner_mutex() {
        static std::mutex m;
        return m;
    }

    std::size_t size_;
    double* in_ = nullptr;
    fftw_complex* out_ = nullptr;
    fftw_plan forward_ = nullptr;
    fftw_plan inverse_ = nullptr;
};

} // namespace dubpipe::detail

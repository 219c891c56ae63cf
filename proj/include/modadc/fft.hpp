#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace modadc {

// In-place iterative radix-2 transform; a.size() must be a power of two.
// inverse=true applies the 1/N scale.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse);

std::size_t next_pow2(std::size_t n);

}  // namespace modadc

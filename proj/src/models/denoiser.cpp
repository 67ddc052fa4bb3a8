#include "cbldm/models/denoiser.hpp"

namespace cbldm {
template class DenoiserT<float>;
template class DenoiserT<double>;
}  // namespace cbldm

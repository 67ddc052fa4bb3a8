#include "cbldm/models/xvae.hpp"

namespace cbldm {
template class XvaeT<float>;
template class XvaeT<double>;
}  // namespace cbldm

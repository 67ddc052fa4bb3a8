#include "cbldm/models/cvae.hpp"

namespace cbldm {
template class CvaeT<float>;
template class CvaeT<double>;
}  // namespace cbldm

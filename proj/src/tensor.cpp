#include "tabs/tensor.hpp"

namespace tabs::detail {

bool& grad_mode_flag() {
  thread_local bool flag = true;
  return flag;
}

}  // namespace tabs::detail

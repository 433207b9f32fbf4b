#include "scalar_impl.hpp"

namespace mogen::kern {

template <typename T>
const KernelTable<T>& scalar_table() {
  static const KernelTable<T> t = scalar::make_table<T>();
  return t;
}

template const KernelTable<float>& scalar_table<float>();
template const KernelTable<double>& scalar_table<double>();

}  // namespace mogen::kern

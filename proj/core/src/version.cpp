#include "hyb/version.hpp"

namespace hyb {

const char* version_string() { return "hyb 0.1.0"; }

}  // namespace hyb

#include "gps/errors.hpp"

namespace gps {

int exit_code(ErrorKind kind) noexcept {
    return kind == ErrorKind::Validation ? 2 : 3;
}

}  // namespace gps

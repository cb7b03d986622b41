#ifndef PROBVERIF_ERROR_HPP
#define PROBVERIF_ERROR_HPP

#include <stdexcept>
#include <string>

namespace pv {

enum class ErrorCode {
    InvalidArgument,
    Parse,
    Dimension,
    NonFinite,
    Io,
    Precondition,
    Internal,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

} // namespace pv

#endif

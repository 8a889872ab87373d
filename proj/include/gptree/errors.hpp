#pragma once

#include <stdexcept>
#include <string>

namespace gptree {

/// Coarse error category. The CLI maps these onto process exit codes.
enum class ErrorKind { Config, Data, Numerical };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define GPTREE_DEFINE_ERROR(Name, Kind)                                                   \
    class Name : public Error {                                                          \
    public:                                                                              \
        explicit Name(const std::string& what) : Error(ErrorKind::Kind, #Name ": " + what) {} \
    };

// numerical
GPTREE_DEFINE_ERROR(FactorizationFailure, Numerical)
GPTREE_DEFINE_ERROR(PDViolation, Numerical)

// data / model structure
GPTREE_DEFINE_ERROR(ZeroRow, Data)
GPTREE_DEFINE_ERROR(DimensionMismatch, Data)
GPTREE_DEFINE_ERROR(SingleClassNode, Data)
GPTREE_DEFINE_ERROR(EmptyClass, Data)
GPTREE_DEFINE_ERROR(UnknownClass, Data)
GPTREE_DEFINE_ERROR(ClassCollision, Data)
GPTREE_DEFINE_ERROR(FormatError, Data)
GPTREE_DEFINE_ERROR(VersionMismatch, Data)
GPTREE_DEFINE_ERROR(LabelRangeError, Data)
GPTREE_DEFINE_ERROR(InsufficientClasses, Data)
GPTREE_DEFINE_ERROR(InsufficientShots, Data)

// configuration
GPTREE_DEFINE_ERROR(ConfigError, Config)

#undef GPTREE_DEFINE_ERROR

}  // namespace gptree

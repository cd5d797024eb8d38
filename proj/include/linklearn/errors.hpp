#pragma once

#include <stdexcept>
#include <string>

namespace linklearn {

// Root of every error thrown by the library. The CLI maps any of these to a
// nonzero exit status with a one-line diagnostic.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define LINKLEARN_ERROR(Name, prefix)                                         \
    class Name : public Error {                                               \
    public:                                                                   \
        explicit Name(const std::string& what) : Error(prefix ": " + what) {} \
    };

LINKLEARN_ERROR(DimensionError, "dimension error")
LINKLEARN_ERROR(LabelError, "label error")
LINKLEARN_ERROR(RankError, "rank error")
LINKLEARN_ERROR(NumericError, "numeric error")
LINKLEARN_ERROR(ConfigError, "config error")
LINKLEARN_ERROR(ProtocolError, "protocol error")
LINKLEARN_ERROR(StateError, "state error")
LINKLEARN_ERROR(CompositionError, "composition error")
LINKLEARN_ERROR(DataError, "data error")
LINKLEARN_ERROR(IndexError, "index error")
LINKLEARN_ERROR(FormatError, "format error")
LINKLEARN_ERROR(StorageError, "storage error")
LINKLEARN_ERROR(LoadError, "load error")

#undef LINKLEARN_ERROR

}  // namespace linklearn

#pragma once

#include <stdexcept>
#include <string>

namespace conceptcil {

/// Base for every error raised by the library. The CLI maps these to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define CONCEPTCIL_DEFINE_ERROR(Name)          \
    class Name : public Error {                \
    public:                                    \
        using Error::Error;                    \
    }

CONCEPTCIL_DEFINE_ERROR(DimensionError);
CONCEPTCIL_DEFINE_ERROR(LabelError);
CONCEPTCIL_DEFINE_ERROR(RangeError);
CONCEPTCIL_DEFINE_ERROR(ParseError);
CONCEPTCIL_DEFINE_ERROR(IntegrityError);
CONCEPTCIL_DEFINE_ERROR(AlignmentError);
CONCEPTCIL_DEFINE_ERROR(EmptyConceptError);
CONCEPTCIL_DEFINE_ERROR(DuplicateClassError);
CONCEPTCIL_DEFINE_ERROR(ConfigError);
CONCEPTCIL_DEFINE_ERROR(ProtocolError);
CONCEPTCIL_DEFINE_ERROR(ScheduleError);
CONCEPTCIL_DEFINE_ERROR(DataError);
CONCEPTCIL_DEFINE_ERROR(EvaluationError);
CONCEPTCIL_DEFINE_ERROR(IoError);

#undef CONCEPTCIL_DEFINE_ERROR

}  // namespace conceptcil

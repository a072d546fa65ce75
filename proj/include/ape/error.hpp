#pragma once

#include <stdexcept>
#include <string>

namespace ape {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define APE_DEFINE_ERROR(Name)                                 \
  struct Name : Error {                                        \
    explicit Name(const std::string& msg) : Error(msg) {}      \
  }

APE_DEFINE_ERROR(OverrunError);       // script consumes more source tokens than exist
APE_DEFINE_ERROR(EmptyCorpus);
APE_DEFINE_ERROR(EmptyInput);
APE_DEFINE_ERROR(ShapeMismatch);
APE_DEFINE_ERROR(NumericalError);     // non-finite value produced
APE_DEFINE_ERROR(NotScalar);
APE_DEFINE_ERROR(VocabMismatch);
APE_DEFINE_ERROR(LineCountMismatch);
APE_DEFINE_ERROR(PoolExhausted);
APE_DEFINE_ERROR(MissingSource);
APE_DEFINE_ERROR(WrongMode);
APE_DEFINE_ERROR(InvalidTarget);
APE_DEFINE_ERROR(ParseError);
APE_DEFINE_ERROR(CheckpointError);
APE_DEFINE_ERROR(IoError);

#undef APE_DEFINE_ERROR

}  // namespace ape

#pragma once

#include <stdexcept>
#include <string>

namespace easr {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define EASR_DEFINE_ERROR(Name)      \
  class Name : public Error {        \
   public:                           \
    using Error::Error;              \
  }

EASR_DEFINE_ERROR(DimensionError);
EASR_DEFINE_ERROR(RankError);
EASR_DEFINE_ERROR(DegenerateRowError);
EASR_DEFINE_ERROR(ModeError);
EASR_DEFINE_ERROR(StateError);
EASR_DEFINE_ERROR(ScheduleError);
EASR_DEFINE_ERROR(ConfigError);
EASR_DEFINE_ERROR(DivisibilityError);
EASR_DEFINE_ERROR(VocabError);
EASR_DEFINE_ERROR(InfeasibleAlignment);
EASR_DEFINE_ERROR(NonFiniteLoss);
EASR_DEFINE_ERROR(ReconciliationError);
EASR_DEFINE_ERROR(FormatError);

#undef EASR_DEFINE_ERROR

}  // namespace easr

#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace rarecast {

// Base for all domain errors. `kind()` is the stable machine-readable class
// name written into error.json by the CLI.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(msg), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

#define RARECAST_DEFINE_ERROR(NAME)                                        \
    class NAME : public Error {                                            \
    public:                                                                \
        explicit NAME(const std::string& msg) : Error(#NAME, msg) {}       \
    }

RARECAST_DEFINE_ERROR(MalformedCode);
RARECAST_DEFINE_ERROR(EmptyCohort);
RARECAST_DEFINE_ERROR(ParseError);
RARECAST_DEFINE_ERROR(SchemaError);
RARECAST_DEFINE_ERROR(Infeasible);
RARECAST_DEFINE_ERROR(EmptyGraph);
RARECAST_DEFINE_ERROR(ZeroVector);
RARECAST_DEFINE_ERROR(ShapeMismatch);
RARECAST_DEFINE_ERROR(DegenerateSequence);
RARECAST_DEFINE_ERROR(UnknownCondition);
RARECAST_DEFINE_ERROR(MissingDomain);
RARECAST_DEFINE_ERROR(UndefinedMetric);
RARECAST_DEFINE_ERROR(MissingFile);
RARECAST_DEFINE_ERROR(ConfigError);

#undef RARECAST_DEFINE_ERROR

}  // namespace rarecast

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sur {

enum class Errc {
    InvalidInput,
    IndexOutOfRange,
    InsufficientSamples,
    NotPositiveDefinite,
    SingularNormalEquations,
    DegenerateResiduals,
};

constexpr std::string_view to_string(Errc code) noexcept
{
    switch (code) {
    case Errc::InvalidInput: return "InvalidInput";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::InsufficientSamples: return "InsufficientSamples";
    case Errc::NotPositiveDefinite: return "NotPositiveDefinite";
    case Errc::SingularNormalEquations: return "SingularNormalEquations";
    case Errc::DegenerateResiduals: return "DegenerateResiduals";
    }
    return "Unknown";
}

/// True for failures that come out of the numerics rather than from bad input.
constexpr bool is_numerical(Errc code) noexcept
{
    return code == Errc::NotPositiveDefinite || code == Errc::SingularNormalEquations ||
           code == Errc::DegenerateResiduals;
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
    {
    }

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

} // namespace sur

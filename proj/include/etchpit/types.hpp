#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace etchpit {

/// Dislocation classes told apart by etch-pit shape.
enum class PitType { BPD = 0, TED = 1, TSD = 2 };

inline constexpr std::array<PitType, 3> kPitTypes = {PitType::BPD, PitType::TED, PitType::TSD};

inline std::string to_string(PitType t)
{
    switch (t) {
    case PitType::BPD: return "BPD";
    case PitType::TED: return "TED";
    case PitType::TSD: return "TSD";
    }
    return "?";
}

inline std::optional<PitType> parse_pit_type(std::string_view s)
{
    if (s == "BPD") return PitType::BPD;
    if (s == "TED") return PitType::TED;
    if (s == "TSD") return PitType::TSD;
    return std::nullopt;
}

// COCO category ids: 1 = BPD, 2 = TED, 3 = TSD.
inline int category_id(PitType t) { return static_cast<int>(t) + 1; }
inline std::optional<PitType> from_category_id(int id)
{
    if (id < 1 || id > 3) return std::nullopt;
    return static_cast<PitType>(id - 1);
}

inline std::size_t index_of(PitType t) { return static_cast<std::size_t>(t); }

}  // namespace etchpit

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace lad {

// Alphabetical order; the index is the one-hot position used by the
// classification head, so this list must never be reordered.
enum class AnomalyCategory : std::uint8_t {
    Crash,
    Crowd,
    Destroy,
    Drop,
    Falling,
    FallIntoWater,
    Fighting,
    Fire,
    Hurt,
    Loitering,
    Panic,
    Thiefing,
    Trampled,
    Violence,
};

inline constexpr int kNumCategories = 14;

inline constexpr std::array<std::string_view, kNumCategories> kCategoryNames = {
    "Crash",   "Crowd",     "Destroy", "Drop",  "Falling",  "FallIntoWater", "Fighting",
    "Fire",    "Hurt",      "Loitering", "Panic", "Thiefing", "Trampled",    "Violence",
};

constexpr int category_index(AnomalyCategory c) { return static_cast<int>(c); }

AnomalyCategory category_from_index(int index);
std::string_view category_name(AnomalyCategory c);
std::optional<AnomalyCategory> parse_category(std::string_view name);

// FNV-1a over the ordered category names. Stored in catalogs and
// checkpoints so a reordering is detected on load.
std::uint64_t category_fingerprint();

}  // namespace lad

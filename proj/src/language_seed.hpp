#pragma once

#include <string_view>

namespace t2t::seed {

extern const std::string_view kEnglish;
extern const std::string_view kFrench;
extern const std::string_view kGerman;
extern const std::string_view kSpanish;

}  // namespace t2t::seed

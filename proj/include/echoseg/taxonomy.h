#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace echoseg {

inline constexpr int kNumForegroundLabels = 14;
inline constexpr int kNumClasses = kNumForegroundLabels + 1;  // background is 0
inline constexpr int kBackground = 0;

enum class View { three_vessel_trachea, four_chamber };
enum class Normality { normal, abnormal };

// Which views a training run uses; also determines the active label set.
enum class ViewFilter { three_vessel_only, four_chamber_only, combined };

std::string_view to_string(View v);        // "3VTV" / "4CHV"
std::string_view to_string(Normality n);   // "normal" / "abnormal"
std::string_view to_string(ViewFilter f);  // "3vtv" / "4chv" / "combined"
View parse_view(std::string_view s);       // throws ValidationError
Normality parse_normality(std::string_view s);
ViewFilter parse_view_filter(std::string_view s);

struct LabelInfo {
    int id;
    std::string_view name;
    bool in_three_vessel;
    bool in_four_chamber;
};

// The 14 annotated structures and the views in which each one appears.
class LabelTaxonomy {
public:
    static const LabelTaxonomy& standard();

    std::span<const LabelInfo> labels() const { return labels_; }
    const LabelInfo& label(int id) const;  // id in 1..14
    bool belongs(int id, View view) const;
    std::vector<int> labels_for(View view) const;
    std::vector<int> active_labels(ViewFilter filter) const;

private:
    LabelTaxonomy();
    std::array<LabelInfo, kNumForegroundLabels> labels_;
};

bool view_allowed(ViewFilter filter, View view);

}  // namespace echoseg

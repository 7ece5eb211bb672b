#include "echoseg/taxonomy.h"

#include <string>

#include "echoseg/errors.h"

namespace echoseg {

std::string_view to_string(View v) { return v == View::three_vessel_trachea ? "3VTV" : "4CHV"; }

std::string_view to_string(Normality n) { return n == Normality::normal ? "normal" : "abnormal"; }

std::string_view to_string(ViewFilter f) {
    switch (f) {
        case ViewFilter::three_vessel_only: return "3vtv";
        case ViewFilter::four_chamber_only: return "4chv";
        case ViewFilter::combined: return "combined";
    }
    return "combined";
}

View parse_view(std::string_view s) {
    if (s == "3VTV") return View::three_vessel_trachea;
    if (s == "4CHV") return View::four_chamber;
    throw ValidationError("unknown view '" + std::string(s) + "' (expected 3VTV or 4CHV)");
}

Normality parse_normality(std::string_view s) {
    if (s == "normal") return Normality::normal;
    if (s == "abnormal") return Normality::abnormal;
    throw ValidationError("unknown normality '" + std::string(s) + "' (expected normal or abnormal)");
}

ViewFilter parse_view_filter(std::string_view s) {
    if (s == "3vtv" || s == "3VTV") return ViewFilter::three_vessel_only;
    if (s == "4chv" || s == "4CHV") return ViewFilter::four_chamber_only;
    if (s == "combined") return ViewFilter::combined;
    throw ValidationError("unknown view filter '" + std::string(s) + "' (expected 3vtv, 4chv or combined)");
}

LabelTaxonomy::LabelTaxonomy()
    : labels_{{
          {1, "Left ventricle", false, true},
          {2, "Right ventricle", false, true},
          {3, "Left atrium", false, true},
          {4, "Right atrium", false, true},
          {5, "Descending aorta", false, true},
          {6, "Pulmonary artery", true, false},
          {7, "Aorta", true, false},
          {8, "Superior vena cava", true, false},
          {9, "Trachea", true, false},
          {10, "Spine", true, true},
          {11, "Interventricular septum", false, true},
          {12, "Interatrial septum", false, true},
          {13, "Mitral valve", false, true},
          {14, "Tricuspid valve", false, true},
      }} {}

const LabelTaxonomy& LabelTaxonomy::standard() {
    static const LabelTaxonomy taxonomy;
    return taxonomy;
}

const LabelInfo& LabelTaxonomy::label(int id) const {
    if (id < 1 || id > kNumForegroundLabels) throw ValidationError("label id out of range: " + std::to_string(id));
    return labels_[id - 1];
}

bool LabelTaxonomy::belongs(int id, View view) const {
    const LabelInfo& info = label(id);
    return view == View::three_vessel_trachea ? info.in_three_vessel : info.in_four_chamber;
}

std::vector<int> LabelTaxonomy::labels_for(View view) const {
    std::vector<int> ids;
    for (const auto& info : labels_)
        if (belongs(info.id, view)) ids.push_back(info.id);
    return ids;
}

std::vector<int> LabelTaxonomy::active_labels(ViewFilter filter) const {
    switch (filter) {
        case ViewFilter::three_vessel_only: return labels_for(View::three_vessel_trachea);
        case ViewFilter::four_chamber_only: return labels_for(View::four_chamber);
        case ViewFilter::combined: break;
    }
    std::vector<int> ids;
    for (const auto& info : labels_) ids.push_back(info.id);
    return ids;
}

bool view_allowed(ViewFilter filter, View view) {
    switch (filter) {
        case ViewFilter::three_vessel_only: return view == View::three_vessel_trachea;
        case ViewFilter::four_chamber_only: return view == View::four_chamber;
        case ViewFilter::combined: return true;
    }
    return true;
}

}  // namespace echoseg

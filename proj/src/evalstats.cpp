#include "puf/evalstats.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

namespace puf {

namespace {

std::string canon_sequence(const std::string& residues, bool il_equiv) {
    std::string s = residues;
    if (il_equiv)
        for (char& c : s)
            if (c == 'I') c = 'L';
    return s;
}

// (name, site) pairs with terminal markers preserved; Carbamidomethyl is the
// fixed modification and is excluded from comparisons.
std::vector<std::pair<std::string, int>> mod_sites(const Peptide& p) {
    std::vector<std::pair<std::string, int>> v;
    for (const auto& m : p.mods)
        if (m.record.name != "Carbamidomethyl") v.emplace_back(m.record.name, m.pos);
    std::sort(v.begin(), v.end());
    return v;
}

std::vector<std::string> mod_names(const Peptide& p) {
    std::vector<std::string> v;
    for (const auto& m : p.mods)
        if (m.record.name != "Carbamidomethyl") v.push_back(m.record.name);
    std::sort(v.begin(), v.end());
    return v;
}

}  // namespace

double peptide_recall(const std::vector<EvalPair>& pairs, bool il_equiv) {
    if (pairs.empty()) return 0.0;
    int hits = 0;
    for (const auto& pr : pairs) {
        if (!pr.predicted) continue;
        if (canon_sequence(pr.predicted->residues, il_equiv) !=
            canon_sequence(pr.truth.residues, il_equiv))
            continue;
        if (mod_sites(*pr.predicted) != mod_sites(pr.truth)) continue;
        ++hits;
    }
    return static_cast<double>(hits) / pairs.size();
}

std::optional<double> modification_accuracy(const std::vector<EvalPair>& pairs) {
    int qualifying = 0, hits = 0;
    for (const auto& pr : pairs) {
        if (mod_names(pr.truth).empty()) continue;
        ++qualifying;
        if (pr.predicted && mod_names(*pr.predicted) == mod_names(pr.truth)) ++hits;
    }
    if (qualifying == 0) return std::nullopt;
    return static_cast<double>(hits) / qualifying;
}

std::optional<double> site_accuracy(const std::vector<EvalPair>& pairs) {
    int qualifying = 0, hits = 0;
    for (const auto& pr : pairs) {
        if (mod_names(pr.truth).empty()) continue;
        ++qualifying;
        if (pr.predicted && mod_sites(*pr.predicted) == mod_sites(pr.truth)) ++hits;
    }
    if (qualifying == 0) return std::nullopt;
    return static_cast<double>(hits) / qualifying;
}

EntrapmentResult entrapment_analysis(const std::vector<std::string>& tags,
                                     const std::string& entrapment_tag, double r,
                                     double fdr_target) {
    EntrapmentResult res;
    res.expected_ratio = fdr_target / (1.0 + r);
    res.total = static_cast<int>(tags.size());
    for (const auto& t : tags)
        if (t == entrapment_tag) ++res.entrapment_count;
    if (res.total > 0)
        res.observed_ratio = static_cast<double>(res.entrapment_count) / res.total;
    return res;
}

RunOverlap compare_runs(const std::vector<std::string>& a,
                        const std::vector<std::string>& b) {
    std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    RunOverlap o;
    for (const auto& k : sa)
        if (sb.count(k))
            ++o.shared;
        else
            ++o.only_a;
    o.only_b = static_cast<int>(sb.size()) - o.shared;
    int uni = o.shared + o.only_a + o.only_b;
    o.jaccard = uni == 0 ? 0.0 : static_cast<double>(o.shared) / uni;
    o.coverage_a_by_b = sa.empty() ? 0.0 : static_cast<double>(o.shared) / sa.size();
    o.coverage_b_by_a = sb.empty() ? 0.0 : static_cast<double>(o.shared) / sb.size();
    return o;
}

std::string peptide_key(const std::string& residues, const std::string& mods,
                        bool il_equiv) {
    return canon_sequence(residues, il_equiv) + "|" + mods;
}

std::string svg_barchart(const std::vector<std::string>& labels,
                         const std::vector<double>& values, const std::string& title) {
    const int bar_w = 60, gap = 20, chart_h = 240, margin = 40;
    const int n = static_cast<int>(values.size());
    const int width = margin * 2 + n * (bar_w + gap);
    const int height = chart_h + margin * 2 + 30;
    double vmax = 1e-12;
    for (double v : values) vmax = std::max(vmax, v);
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\">\n";
    out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
    for (int i = 0; i < n; ++i) {
        double v = values[static_cast<std::size_t>(i)];
        int h = static_cast<int>(v / vmax * chart_h);
        int x = margin + i * (bar_w + gap);
        int y = margin + chart_h - h;
        out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar_w
            << "\" height=\"" << h << "\" fill=\"#4477aa\"/>\n";
        out << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << y - 4
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << v << "</text>\n";
        out << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << margin + chart_h + 16
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << labels[static_cast<std::size_t>(i)] << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace puf

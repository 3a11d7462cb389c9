#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "puf/denovo.hpp"
#include "puf/evalstats.hpp"

using namespace puf;

namespace {

ModTable table() {
    return parse_modification_table(
        "Carbamidomethyl\tC\tAnywhere\t57.021464\n"
        "Oxidation\tM\tAnywhere\t15.994915\n"
        "Phospho\tS\tAnywhere\t79.966331\n"
        "Acetyl\tK\tAnywhere\t42.010565\n");
}

DenovoRow row(const std::string& title, double score, double cosine, double coverage) {
    DenovoRow r;
    r.title = title;
    r.peptide = "AGDSK";
    r.predicted_length = 5;
    r.length_used = 5;
    r.neural_score = score;
    r.cosine_similarity = cosine;
    r.fragment_coverage = coverage;
    r.high_confidence = coverage == 1.0;
    return r;
}

EvalPair pair(const std::string& pred_seq, const std::string& pred_mods,
              const std::string& truth_seq, const std::string& truth_mods,
              const ModTable& t) {
    EvalPair p;
    p.title = "s";
    p.truth.residues = truth_seq;
    p.truth.mods = parse_mods(truth_mods, t, truth_seq);
    if (!pred_seq.empty()) {
        Peptide q;
        q.residues = pred_seq;
        q.mods = parse_mods(pred_mods, t, pred_seq);
        p.predicted = q;
    }
    return p;
}

}  // namespace

TEST_CASE("qc filter conjunction and high confidence") {
    std::vector<DenovoRow> rows{row("a", 5, 0.9, 1.0), row("b", 5, 0.5, 1.0),
                                row("c", 1, 0.9, 0.8), row("d", 5, 0.8, 0.8)};
    FilterConfig cfg;
    cfg.min_neural_score = 2.0;
    cfg.min_cosine = 0.7;
    auto qc = qc_filter(rows, cfg);
    REQUIRE(qc.kept.size() == 2);  // a and d
    CHECK(qc.kept[0].title == "a");
    CHECK(qc.kept[1].title == "d");
    REQUIRE(qc.high_confidence.size() == 1);
    CHECK(qc.high_confidence[0].title == "a");
    for (const auto& r : qc.high_confidence) CHECK(r.fragment_coverage == 1.0);

    cfg.require_full_coverage = true;
    auto strict = qc_filter(rows, cfg);
    CHECK(strict.kept.size() == strict.high_confidence.size());

    cfg = FilterConfig{};
    cfg.min_neural_score = -1e300;
    cfg.min_cosine = -1e300;
    CHECK(qc_filter(rows, cfg).kept.size() == rows.size());
}

TEST_CASE("peptide recall with I/L equivalence") {
    auto t = table();
    std::vector<EvalPair> pairs{
        pair("PEPTIDE", "", "PEPTIDE", "", t),
        pair("PEPTLDE", "", "PEPTIDE", "", t),   // I<->L swap
        pair("PEPTIDK", "", "PEPTIDE", "", t),   // wrong residue
        pair("", "", "PEPTIDE", "", t),          // missing prediction
    };
    CHECK(peptide_recall(pairs, false) == doctest::Approx(0.25));
    CHECK(peptide_recall(pairs, true) == doctest::Approx(0.5));

    // same mod name at a different site is not a sequence-level match
    std::vector<EvalPair> modded{
        pair("MSMS", "Oxidation@1", "MSMS", "Oxidation@1", t),
        pair("MSMS", "Oxidation@3", "MSMS", "Oxidation@1", t),
    };
    CHECK(peptide_recall(modded, false) == doctest::Approx(0.5));
}

TEST_CASE("modification and site accuracy") {
    auto t = table();
    std::vector<EvalPair> pairs{
        pair("MSMS", "Oxidation@1", "MSMS", "Oxidation@1", t),  // exact
        pair("MSMS", "Oxidation@3", "MSMS", "Oxidation@1", t),  // right mod, wrong site
        pair("MSMS", "Phospho@2", "MSMS", "Oxidation@1", t),    // wrong mod
        pair("AGDK", "", "AGDK", "", t),                        // unmodified: excluded
    };
    auto mod = modification_accuracy(pairs);
    auto site = site_accuracy(pairs);
    REQUIRE(mod.has_value());
    REQUIRE(site.has_value());
    CHECK(*mod == doctest::Approx(2.0 / 3.0));
    CHECK(*site == doctest::Approx(1.0 / 3.0));
    CHECK(*site <= *mod);

    std::vector<EvalPair> unmod{pair("AGDK", "", "AGDK", "", t)};
    CHECK(!modification_accuracy(unmod).has_value());
    CHECK(!site_accuracy(unmod).has_value());
}

TEST_CASE("entrapment arithmetic") {
    auto res = entrapment_analysis({"target", "target", "entrapment", "target"},
                                   "entrapment", 1.75, 0.01);
    CHECK(res.expected_ratio == doctest::Approx(0.01 / 2.75).epsilon(1e-12));
    CHECK(std::abs(res.expected_ratio - 0.0036) < 5e-5);
    REQUIRE(res.observed_ratio.has_value());
    CHECK(*res.observed_ratio == doctest::Approx(0.25));

    CHECK(!entrapment_analysis({}, "entrapment", 1.75, 0.01).observed_ratio.has_value());
    auto all = entrapment_analysis({"entrapment"}, "entrapment", 1.0, 0.01);
    CHECK(*all.observed_ratio == doctest::Approx(1.0));

    // formula oracle over random (fdr, r) pairs
    for (int i = 1; i <= 10; ++i) {
        double fdr = 0.001 * i, r = 0.3 * i;
        CHECK(entrapment_analysis({"x"}, "e", r, fdr).expected_ratio ==
              doctest::Approx(fdr / (1.0 + r)).epsilon(1e-12));
    }
}

TEST_CASE("run comparison") {
    auto same = compare_runs({"a|", "b|"}, {"a|", "b|"});
    CHECK(same.jaccard == doctest::Approx(1.0));
    CHECK(same.coverage_a_by_b == doctest::Approx(1.0));

    auto disjoint = compare_runs({"a|"}, {"b|"});
    CHECK(disjoint.jaccard == doctest::Approx(0.0));
    CHECK(disjoint.shared == 0);

    auto subset = compare_runs({"a|"}, {"a|", "b|", "c|"});
    CHECK(subset.coverage_a_by_b == doctest::Approx(1.0));
    CHECK(subset.coverage_b_by_a == doctest::Approx(1.0 / 3.0));
    CHECK(subset.only_b == 2);

    CHECK(peptide_key("PELTIDE", "m", true) == peptide_key("PEITIDE", "m", true));
    CHECK(peptide_key("PELTIDE", "m", false) != peptide_key("PEITIDE", "m", false));
}

TEST_CASE("svg bar chart is well formed") {
    auto svg = svg_barchart({"a", "b"}, {0.5, 1.0}, "demo");
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg.find("demo") != std::string::npos);
    CHECK(std::count(svg.begin(), svg.end(), '<') ==
          std::count(svg.begin(), svg.end(), '>'));
}

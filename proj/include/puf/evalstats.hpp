#pragma once

#include <optional>
#include <string>
#include <vector>

#include "puf/chem.hpp"

namespace puf {

struct EvalPair {
    std::optional<Peptide> predicted;
    Peptide truth;
    std::string title;
};

/// Fraction of pairs where the prediction matches the truth in sequence
/// (I and L merged when il_equiv), modification names, and modification
/// sites (terminal mods compare by terminus marker).
double peptide_recall(const std::vector<EvalPair>& pairs, bool il_equiv);

/// Over pairs whose truth carries modifications beyond Carbamidomethyl:
/// fraction where the modification name multisets agree (sites ignored).
/// Absent when no pair qualifies.
std::optional<double> modification_accuracy(const std::vector<EvalPair>& pairs);

/// Same scope; requires (name, site) sets to match exactly.
std::optional<double> site_accuracy(const std::vector<EvalPair>& pairs);

struct EntrapmentResult {
    std::optional<double> observed_ratio;  // entrapment / total, absent if no ids
    double expected_ratio = 0.0;           // fdr_target / (1 + r)
    int entrapment_count = 0;
    int total = 0;
};

/// `tags` holds one species tag per FDR-filtered identification; entries equal
/// to `entrapment_tag` count as entrapment hits.
EntrapmentResult entrapment_analysis(const std::vector<std::string>& tags,
                                     const std::string& entrapment_tag, double r,
                                     double fdr_target);

struct RunOverlap {
    int shared = 0;
    int only_a = 0;
    int only_b = 0;
    double jaccard = 0.0;
    double coverage_a_by_b = 0.0;  // fraction of a's peptides present in b
    double coverage_b_by_a = 0.0;
};

/// Set overlap of peptide keys (e.g. "SEQ|mods" strings); duplicates within a
/// run collapse.
RunOverlap compare_runs(const std::vector<std::string>& a,
                        const std::vector<std::string>& b);

/// Key used by compare_runs for a peptide + its modifications.
std::string peptide_key(const std::string& residues, const std::string& mods,
                        bool il_equiv);

/// Minimal standalone SVG bar chart (one bar per label/value pair).
std::string svg_barchart(const std::vector<std::string>& labels,
                         const std::vector<double>& values, const std::string& title);

}  // namespace puf

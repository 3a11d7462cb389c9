#pragma once

#include <string>
#include <vector>

#include "puf/model.hpp"
#include "puf/msio.hpp"
#include "puf/search.hpp"

namespace puf {

struct FilterConfig {
    double min_neural_score = 0.0;
    double min_cosine = 0.7;
    bool require_full_coverage = false;
};

struct DenovoCandidate {
    Peptide peptide;
    int length_used = 0;
    double log_prob = 0.0;
    double neural_score = 0.0;
};

class DenovoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Decode at every length in [predicted-2, predicted+2] clamped to
/// [1, L_max], pool survivors, joint-score each, sort by neural score.
std::vector<DenovoCandidate> denovo_spectrum(const ModelParams& params,
                                             const ProcessedSpectrum& s,
                                             const ModTable& mods, int beam,
                                             double tol_ppm, int* predicted_length_out);

struct DenovoRunResult {
    std::vector<DenovoRow> records;
    /// Pooled candidates per spectrum (aligned with the input run), for the
    /// enriched workflow's FASTA compilation.
    std::vector<std::vector<DenovoCandidate>> pooled;
    std::vector<int> predicted_lengths;
};

DenovoRunResult regular_denovo(const ModelParams& params,
                               const std::vector<ProcessedSpectrum>& run,
                               const ModTable& mods, int beam, double tol_ppm);

struct EnrichedResult {
    std::vector<DenovoRow> records;
    std::string compiled_fasta;              // every pooled sequence once
    std::vector<std::string> variable_mods;  // top-4 by candidate count + user mods
};

/// FASTA compilation + whole-entry restricted re-search with the top-4
/// modifications (by pooled candidate count) plus user-specified ones. Falls
/// back to the regular record when re-search finds nothing for a spectrum.
EnrichedResult enriched_denovo(const ModelParams& params,
                               const std::vector<ProcessedSpectrum>& run,
                               const ModTable& mods,
                               const std::vector<std::string>& user_mods, int beam,
                               double tol_ppm);

/// 5th-percentile score of a residue-shuffled null: each record's peptide is
/// shuffled (seeded) and joint-scored against its own spectrum.
double null_score_threshold(const ModelParams& params,
                            const std::vector<ProcessedSpectrum>& run,
                            const std::vector<DenovoRow>& records, std::uint64_t seed,
                            double percentile = 0.05);

struct QcResult {
    std::vector<DenovoRow> kept;
    std::vector<DenovoRow> high_confidence;
};

/// Threshold conjunction on neural score and cosine; high-confidence subset
/// has fragment coverage exactly 1.0.
QcResult qc_filter(const std::vector<DenovoRow>& records, const FilterConfig& cfg);

}  // namespace puf

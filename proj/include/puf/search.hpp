#pragma once

#include <string>
#include <vector>

#include "puf/index.hpp"
#include "puf/model.hpp"
#include "puf/msio.hpp"

namespace puf {

enum class SearchMode { Restricted, Open };

struct SearchConfig {
    SearchMode mode = SearchMode::Open;
    int top_k = 10;  // see default_top_k
    double q_gate = 0.1;
    double fdr_target = 0.01;
    double precursor_tol_ppm = 10.0;
    double fragment_tol_ppm = 20.0;
};

/// 10 for specific enzymes, 20 for non-specific digestion.
int default_top_k(EnzymeRule enzyme);

struct PSMRecord {
    std::string title;
    int rank = 1;
    Peptide peptide;
    int charge = 1;
    double precursor_mz = 0.0;
    double precursor_neutral_mass = 0.0;
    double mass_error_ppm = 0.0;
    double kernel_score = 0.0;
    double neural_score = 0.0;
    double cosine_similarity = 0.0;
    double fragment_coverage = 0.0;
    bool is_decoy = false;
    double q_value = 1.0;
};

class SearchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Hyperscore-style kernel: log1p(matched intensity sum) + ln(Nb!) + ln(Ny!)
/// over b/y matches within tol_ppm. 0 when nothing matches.
double kernel_score(const ProcessedSpectrum& s, const Peptide& p, double tol_ppm);

/// Candidate lookup + kernel scoring; top_k records ranked 1..k by
/// descending kernel score (ties broken by peptide string for determinism).
std::vector<PSMRecord> search_spectrum(const ProcessedSpectrum& s,
                                       const PrecursorIndex& index, const ModTable& mods,
                                       const SearchConfig& cfg);

enum class ScoreField { Kernel, Neural };

/// Target-decoy q-values over one best record per spectrum. Sorts by
/// descending score (ties: decoys first, then title); prefix FDR =
/// #decoys/#targets capped at 1; q = running minimum from the bottom.
void compute_qvalues(std::vector<PSMRecord>& rank1, ScoreField field);

struct RescoreStats {
    int spectra_with_candidates = 0;
    int gate_passed = 0;
    int accepted_at_fdr = 0;  // targets only
};

/// Kernel q-value gate (< cfg.q_gate), neural rescoring of gated spectra,
/// q-value recomputation on neural rank-1 records, FDR filter. Survivors
/// carry cosine_similarity and fragment_coverage. `spectra` aligns with
/// `per_spectrum` by position.
std::vector<PSMRecord> rescore_run(const std::vector<std::vector<PSMRecord>>& per_spectrum,
                                   const std::vector<ProcessedSpectrum>& spectra,
                                   const ModelParams& params, const ModTable& mods,
                                   const SearchConfig& cfg, RescoreStats* stats = nullptr);

PSMRow to_psm_row(const PSMRecord& r);

struct FinetuneResult {
    int batches = 0;
    int train_spectra = 0;
    int heldout_spectra = 0;
    int accepted_before = 0;
    int accepted_after = 0;
};

/// One-epoch adaptation on a kernel-searched run: rank-1 candidates are
/// positives (decoys included), target candidates ranked 3..10 are negatives.
/// Every 5th spectrum is held out; accepted counts use rescore_run on the
/// held-out split before and after the update. Throws SearchError when fewer
/// than min_batches batches can be formed.
FinetuneResult finetune(ModelParams& params,
                        const std::vector<std::vector<PSMRecord>>& per_spectrum,
                        const std::vector<ProcessedSpectrum>& spectra,
                        const ModTable& mods, const SearchConfig& cfg,
                        int batch_size = 8, int min_batches = 16, int epochs = 1);

}  // namespace puf

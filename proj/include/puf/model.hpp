#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "puf/chem.hpp"
#include "puf/index.hpp"
#include "puf/msio.hpp"
#include "puf/tensor.hpp"

namespace puf {

struct Hyper {
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int L_max = 45;
    double temperature = 0.1;  // in-batch contrastive softmax
    double learning_rate = 1e-3;
    double momentum = 0.9;
    std::uint64_t seed = 42;
};

/// Token layout: 0=BOS, 1=EOS, 2..21 residues (ACDEFGHIKLMNPQRSTVWY order),
/// 22+token_id for tokenized modifications.
struct Vocab {
    std::vector<std::string> mod_names;  // index = mod token_id

    int size() const { return 22 + static_cast<int>(mod_names.size()); }
    static constexpr int kBos = 0;
    static constexpr int kEos = 1;
    static constexpr int kResidueBase = 2;
    static constexpr int kModBase = 22;
    static int residue_token(char aa);
    int mod_token(int token_id) const { return kModBase + token_id; }

    static Vocab from_table(const ModTable& table);
};

struct ModelParams {
    Hyper hp;
    Vocab vocab;
    std::map<std::string, nn::Mat> arrays;

    static ModelParams init(const Hyper& hp, const Vocab& vocab);
    /// Throws ModelError naming the first active mod token missing from vocab.
    void check_vocab_covers(const ModTable& table) const;
};

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Versioned binary model file, magic "PUFMDL1". Bit-exact round trip.
void save_params(const ModelParams& p, const std::string& path);
ModelParams load_params(const std::string& path);

struct SpectrumRepr {
    nn::Ref per_peak = nullptr;  // n_peaks x d (precursor row excluded)
    nn::Ref all_rows = nullptr;  // n_peaks+1 x d, incl. precursor row (attention keys)
    nn::Ref pooled = nullptr;    // 1 x d, mean over peak rows
    int n_peaks = 0;
};

struct PeptideRepr {
    nn::Ref per_token = nullptr;  // (L+2) x d: BOS, residues, EOS
    nn::Ref pooled = nullptr;     // BOS row
    int length = 0;
};

struct SpectrumHeadLogits {
    nn::Ref aa_count = nullptr;  // n_peaks x (L_max+1)
    nn::Ref ion_type = nullptr;  // n_peaks x 7
    nn::Ref length = nullptr;    // 1 x L_max  (lengths 1..L_max)
};

/// Binds a parameter set onto a tape; caches one leaf per named array.
class ModelRuntime {
public:
    ModelRuntime(nn::Tape& tape, const ModelParams& params, bool train)
        : tape_(tape), params_(params), train_(train) {}

    nn::Ref param(const std::string& name);
    nn::Tape& tape() { return tape_; }
    const ModelParams& params() const { return params_; }
    const Hyper& hp() const { return params_.hp; }
    /// Parameter gradients accumulated during backward, keyed by array name.
    std::map<std::string, const nn::Mat*> grads() const;

    SpectrumRepr embed_spectrum(const ProcessedSpectrum& s);
    PeptideRepr embed_peptide(const Peptide& p);
    SpectrumHeadLogits spectrum_heads(const SpectrumRepr& r);
    /// (L-1) x 6 non-negative matrix with unit L2 norm; column order
    /// b, y, b-H2O, y-H2O, b-NH3, y-NH3.
    nn::Ref predict_spectrum(const PeptideRepr& r);
    /// Pooled cross-attention state of the (spectrum, peptide) pair, 1 x d.
    nn::Ref joint_fused(const SpectrumRepr& rs, const PeptideRepr& rp);
    nn::Ref joint_score_node(nn::Ref fused);  // 1 x 1
    /// Pre-softmax listwise scores over candidate fused states, 1 x K.
    /// Permutation-equivariant (no positional encoding over candidates).
    nn::Ref listwise_logits(const std::vector<nn::Ref>& fused_states);
    /// Softmax distribution over candidate fused states, 1 x K.
    nn::Ref listwise_rank(const std::vector<nn::Ref>& fused_states);
    /// Teacher-forced decoder logits, one row per prediction step.
    nn::Ref decoder_logits(const SpectrumRepr& rs, const std::vector<int>& tokens,
                           const std::vector<int>& remaining_len,
                           const std::vector<double>& prefix_mass);

private:
    nn::Tape& tape_;
    const ModelParams& params_;
    bool train_;
    std::map<std::string, nn::Ref> leaves_;

    nn::Ref encoder_stack(const std::string& prefix, nn::Ref x);
    nn::Ref self_attention(const std::string& prefix, nn::Ref x, bool causal);
    nn::Ref cross_attention(const std::string& prefix, nn::Ref q_rows, nn::Ref kv_rows);
    nn::Ref ffn(const std::string& prefix, nn::Ref x);
};

// ---- convenience inference wrappers (own a local tape) ----

double joint_score(const ModelParams& p, const ProcessedSpectrum& s, const Peptide& pep);
std::vector<double> joint_scores(const ModelParams& p, const ProcessedSpectrum& s,
                                 const std::vector<Peptide>& peps);
int predict_length(const ModelParams& p, const ProcessedSpectrum& s);
std::vector<double> length_distribution(const ModelParams& p, const ProcessedSpectrum& s);
/// Cosine between the predicted 6-label matrix and the experimental matrix
/// assembled from matched peak intensities.
double predicted_spectrum_cosine(const ModelParams& p, const ProcessedSpectrum& s,
                                 const Peptide& pep, double tol_ppm = 20.0);

/// Experimental (L-1) x 6 intensity matrix for the spectrum-prediction target.
nn::Mat experimental_ion_matrix(const ProcessedSpectrum& s, const Peptide& pep,
                                double tol_ppm = 20.0);

// ---- de novo decoding ----

struct DecodedPeptide {
    Peptide peptide;
    double log_prob = 0.0;
};

/// Length- and mass-constrained beam search. Every returned peptide has
/// exactly target_length residues and neutral mass within tol of the
/// precursor. Empty result when no mass-valid completion survives.
std::vector<DecodedPeptide> pla_decode(const ModelParams& p, const ProcessedSpectrum& s,
                                       int target_length, double precursor_neutral_mass,
                                       int beam, const ModTable& mods,
                                       double tol_ppm = 20.0);

/// Logits for the next token after feeding `tokens` through the incremental
/// (KV-cached) decoder used by beam search. Matches the last row of
/// decoder_logits on the same stream; the tests cross-check the two paths.
std::vector<double> decoder_incremental_logits(const ModelParams& p,
                                               const ProcessedSpectrum& s,
                                               const std::vector<int>& tokens,
                                               const std::vector<int>& remaining_len,
                                               const std::vector<double>& prefix_mass);

/// Token stream for a peptide as the decoder sees it: residue tokens with
/// mod tokens following the residue they modify, terminated by EOS.
struct DecoderStream {
    std::vector<int> tokens;          // starts with BOS
    std::vector<int> targets;         // next-token targets, size tokens.size()
    std::vector<int> remaining_len;   // per input position
    std::vector<double> prefix_mass;  // per input position
};
DecoderStream make_decoder_stream(const Peptide& p, const Vocab& vocab);

// ---- training ----

struct TrainItem {
    ProcessedSpectrum spectrum;
    Peptide positive;
    std::vector<Peptide> negatives;  // candidates ranked 3..10
    std::vector<PeakAnnotation> annotations;
    int true_length = 0;
};

struct LossWeights {
    double aa_count = 1.0;
    double ion_type = 1.0;
    double length = 1.0;
    double spectrum_pred = 1.0;
    double pointwise = 1.0;
    double listwise = 0.5;
    double decoder = 1.0;
};

struct LossComponents {
    double aa_count = 0.0;
    double ion_type = 0.0;
    double length = 0.0;
    double spectrum_pred = 0.0;
    double pointwise = 0.0;
    double listwise = 0.0;
    double decoder = 0.0;
    double total = 0.0;
};

class Trainer {
public:
    Trainer(ModelParams& params, LossWeights weights) : params_(params), weights_(weights) {}

    LossComponents step(const std::vector<TrainItem>& batch);
    /// Forward+backward only; gradients land in out_grads. Used by the
    /// finite-difference check.
    LossComponents compute_gradients(const std::vector<TrainItem>& batch,
                                     std::map<std::string, nn::Mat>& out_grads);
    double forward_loss(const std::vector<TrainItem>& batch);

    ModelParams& params() { return params_; }

private:
    ModelParams& params_;
    LossWeights weights_;
    std::map<std::string, nn::Mat> velocity_;
};

}  // namespace puf

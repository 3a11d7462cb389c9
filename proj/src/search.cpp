#include "puf/search.hpp"

#include <algorithm>
#include <cmath>

namespace puf {

int default_top_k(EnzymeRule enzyme) {
    return enzyme == EnzymeRule::NonSpecific ? 20 : 10;
}

double kernel_score(const ProcessedSpectrum& s, const Peptide& p, double tol_ppm) {
    auto frags = generate_fragments(p, 2, {true, true});
    double matched_sum = 0.0;
    int nb = 0, ny = 0;
    for (const auto& f : frags) {
        double best = -1.0;
        for (const auto& pk : s.peaks) {
            if (std::abs(pk.mz - f.mz) / f.mz * 1e6 <= tol_ppm)
                best = std::max(best, pk.intensity);
        }
        if (best < 0.0) continue;
        matched_sum += best;
        if (f.series == IonSeries::B)
            ++nb;
        else
            ++ny;
    }
    if (nb + ny == 0) return 0.0;
    return std::log1p(matched_sum) + std::lgamma(nb + 1.0) + std::lgamma(ny + 1.0);
}

std::vector<PSMRecord> search_spectrum(const ProcessedSpectrum& s,
                                       const PrecursorIndex& index, const ModTable& mods,
                                       const SearchConfig& cfg) {
    std::vector<CandidatePeptide> cands =
        cfg.mode == SearchMode::Open
            ? index.query_open(s.precursor_neutral_mass, cfg.precursor_tol_ppm, mods)
            : index.query_restricted(s.precursor_neutral_mass, cfg.precursor_tol_ppm);
    std::vector<PSMRecord> recs;
    recs.reserve(cands.size());
    for (const auto& c : cands) {
        PSMRecord r;
        r.title = s.title;
        r.peptide = c.peptide;
        r.charge = s.charge;
        r.precursor_mz = s.precursor_mz;
        r.precursor_neutral_mass = s.precursor_neutral_mass;
        r.mass_error_ppm = c.mass_error_ppm;
        r.is_decoy = c.is_decoy;
        r.kernel_score = kernel_score(s, c.peptide, cfg.fragment_tol_ppm);
        recs.push_back(std::move(r));
    }
    std::stable_sort(recs.begin(), recs.end(), [](const PSMRecord& a, const PSMRecord& b) {
        if (a.kernel_score != b.kernel_score) return a.kernel_score > b.kernel_score;
        if (a.peptide.residues != b.peptide.residues)
            return a.peptide.residues < b.peptide.residues;
        return format_mods(a.peptide) < format_mods(b.peptide);
    });
    if (static_cast<int>(recs.size()) > cfg.top_k)
        recs.resize(static_cast<std::size_t>(cfg.top_k));
    for (std::size_t i = 0; i < recs.size(); ++i) recs[i].rank = static_cast<int>(i) + 1;
    return recs;
}

void compute_qvalues(std::vector<PSMRecord>& rank1, ScoreField field) {
    auto score_of = [field](const PSMRecord& r) {
        return field == ScoreField::Kernel ? r.kernel_score : r.neural_score;
    };
    std::vector<std::size_t> order(rank1.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        double sa = score_of(rank1[a]), sb = score_of(rank1[b]);
        if (sa != sb) return sa > sb;
        if (rank1[a].is_decoy != rank1[b].is_decoy) return rank1[a].is_decoy;
        return rank1[a].title < rank1[b].title;
    });
    std::vector<double> fdr(order.size(), 1.0);
    int decoys = 0, targets = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (rank1[order[i]].is_decoy)
            ++decoys;
        else
            ++targets;
        fdr[i] = targets == 0 ? 1.0
                              : std::min(1.0, static_cast<double>(decoys) / targets);
    }
    double running = 1.0;
    for (std::size_t i = order.size(); i-- > 0;) {
        running = std::min(running, fdr[i]);
        rank1[order[i]].q_value = running;
    }
}

std::vector<PSMRecord> rescore_run(const std::vector<std::vector<PSMRecord>>& per_spectrum,
                                   const std::vector<ProcessedSpectrum>& spectra,
                                   const ModelParams& params, const ModTable& mods,
                                   const SearchConfig& cfg, RescoreStats* stats) {
    if (per_spectrum.size() != spectra.size())
        throw SearchError("candidate lists do not align with spectra");
    params.check_vocab_covers(mods);

    RescoreStats st;
    std::vector<PSMRecord> kernel_rank1;
    std::vector<std::size_t> owner;  // spectrum index per rank-1 record
    for (std::size_t i = 0; i < per_spectrum.size(); ++i) {
        if (per_spectrum[i].empty()) continue;
        ++st.spectra_with_candidates;
        kernel_rank1.push_back(per_spectrum[i].front());
        owner.push_back(i);
    }
    compute_qvalues(kernel_rank1, ScoreField::Kernel);

    std::vector<PSMRecord> neural_rank1;
    std::vector<std::size_t> neural_owner;
    for (std::size_t k = 0; k < kernel_rank1.size(); ++k) {
        if (kernel_rank1[k].q_value >= cfg.q_gate) continue;
        ++st.gate_passed;
        std::size_t si = owner[k];
        std::vector<PSMRecord> cands = per_spectrum[si];
        std::vector<Peptide> peps;
        peps.reserve(cands.size());
        for (const auto& c : cands) peps.push_back(c.peptide);
        std::vector<double> scores = joint_scores(params, spectra[si], peps);
        for (std::size_t j = 0; j < cands.size(); ++j)
            cands[j].neural_score = scores[j];
        std::stable_sort(cands.begin(), cands.end(),
                         [](const PSMRecord& a, const PSMRecord& b) {
                             return a.neural_score > b.neural_score;
                         });
        neural_rank1.push_back(cands.front());
        neural_rank1.back().rank = 1;
        neural_owner.push_back(si);
    }
    compute_qvalues(neural_rank1, ScoreField::Neural);

    std::vector<PSMRecord> out;
    for (std::size_t k = 0; k < neural_rank1.size(); ++k) {
        PSMRecord& r = neural_rank1[k];
        if (r.is_decoy || r.q_value > cfg.fdr_target) continue;
        const auto& s = spectra[neural_owner[k]];
        r.cosine_similarity =
            predicted_spectrum_cosine(params, s, r.peptide, cfg.fragment_tol_ppm);
        r.fragment_coverage = fragment_coverage(s, r.peptide, cfg.fragment_tol_ppm);
        ++st.accepted_at_fdr;
        out.push_back(r);
    }
    std::stable_sort(out.begin(), out.end(), [](const PSMRecord& a, const PSMRecord& b) {
        return a.title < b.title;
    });
    if (stats) *stats = st;
    return out;
}

PSMRow to_psm_row(const PSMRecord& r) {
    PSMRow row;
    row.title = r.title;
    row.rank = r.rank;
    row.peptide = r.peptide.residues;
    row.modifications = format_mods(r.peptide);
    row.charge = r.charge;
    row.precursor_mz = r.precursor_mz;
    row.mass_error_ppm = r.mass_error_ppm;
    row.kernel_score = r.kernel_score;
    row.neural_score = r.neural_score;
    row.cosine_similarity = r.cosine_similarity;
    row.fragment_coverage = r.fragment_coverage;
    row.is_decoy = r.is_decoy;
    row.q_value = r.q_value;
    return row;
}

namespace {

int accepted_count(const ModelParams& params,
                   const std::vector<std::vector<PSMRecord>>& per_spectrum,
                   const std::vector<ProcessedSpectrum>& spectra, const ModTable& mods,
                   const SearchConfig& cfg) {
    RescoreStats st;
    rescore_run(per_spectrum, spectra, params, mods, cfg, &st);
    return st.accepted_at_fdr;
}

}  // namespace

FinetuneResult finetune(ModelParams& params,
                        const std::vector<std::vector<PSMRecord>>& per_spectrum,
                        const std::vector<ProcessedSpectrum>& spectra,
                        const ModTable& mods, const SearchConfig& cfg, int batch_size,
                        int min_batches, int epochs) {
    if (per_spectrum.size() != spectra.size())
        throw SearchError("candidate lists do not align with spectra");
    if (batch_size < 1) throw SearchError("batch_size must be positive");

    std::vector<TrainItem> items;
    std::vector<std::vector<PSMRecord>> held_cands;
    std::vector<ProcessedSpectrum> held_spectra;
    std::size_t eligible = 0;
    for (std::size_t i = 0; i < per_spectrum.size(); ++i) {
        if (per_spectrum[i].empty()) continue;
        if (eligible++ % 5 == 4) {
            held_cands.push_back(per_spectrum[i]);
            held_spectra.push_back(spectra[i]);
            continue;
        }
        const PSMRecord& top = per_spectrum[i].front();
        if (static_cast<int>(top.peptide.residues.size()) > params.hp.L_max) continue;
        TrainItem item;
        item.spectrum = spectra[i];
        item.positive = top.peptide;  // decoy positives kept deliberately
        for (const auto& c : per_spectrum[i]) {
            if (c.rank < 3 || c.rank > 10) continue;
            if (c.is_decoy) continue;  // negatives are target candidates only
            if (static_cast<int>(c.peptide.residues.size()) > params.hp.L_max) continue;
            item.negatives.push_back(c.peptide);
        }
        item.annotations =
            annotate_peaks(spectra[i], top.peptide, cfg.fragment_tol_ppm);
        item.true_length = static_cast<int>(top.peptide.residues.size());
        items.push_back(std::move(item));
    }
    const int batches = static_cast<int>(items.size()) / batch_size;
    if (batches < min_batches)
        throw SearchError("not enough identified spectra to fine-tune: " +
                          std::to_string(batches) + " batches available, need " +
                          std::to_string(min_batches));

    FinetuneResult res;
    res.batches = batches;
    res.train_spectra = static_cast<int>(items.size());
    res.heldout_spectra = static_cast<int>(held_spectra.size());
    res.accepted_before = accepted_count(params, held_cands, held_spectra, mods, cfg);

    Trainer trainer(params, LossWeights{});
    for (int e = 0; e < epochs; ++e) {
        for (int b = 0; b < batches; ++b) {
            std::vector<TrainItem> batch(
                items.begin() + static_cast<std::ptrdiff_t>(b) * batch_size,
                items.begin() + static_cast<std::ptrdiff_t>(b + 1) * batch_size);
            trainer.step(batch);
        }
    }
    res.accepted_after = accepted_count(params, held_cands, held_spectra, mods, cfg);
    return res;
}

}  // namespace puf

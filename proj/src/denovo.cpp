#include "puf/denovo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>

namespace puf {

std::vector<DenovoCandidate> denovo_spectrum(const ModelParams& params,
                                             const ProcessedSpectrum& s,
                                             const ModTable& mods, int beam,
                                             double tol_ppm, int* predicted_length_out) {
    int L0 = predict_length(params, s);
    if (predicted_length_out) *predicted_length_out = L0;
    std::vector<DenovoCandidate> pooled;
    int lo = std::max(1, L0 - 2), hi = std::min(params.hp.L_max, L0 + 2);
    for (int len = lo; len <= hi; ++len) {
        auto decoded =
            pla_decode(params, s, len, s.precursor_neutral_mass, beam, mods, tol_ppm);
        for (auto& d : decoded)
            pooled.push_back({std::move(d.peptide), len, d.log_prob, 0.0});
    }
    if (pooled.empty()) return pooled;
    std::vector<Peptide> peps;
    peps.reserve(pooled.size());
    for (const auto& c : pooled) peps.push_back(c.peptide);
    std::vector<double> scores = joint_scores(params, s, peps);
    for (std::size_t i = 0; i < pooled.size(); ++i) pooled[i].neural_score = scores[i];
    std::stable_sort(pooled.begin(), pooled.end(),
                     [](const DenovoCandidate& a, const DenovoCandidate& b) {
                         if (a.neural_score != b.neural_score)
                             return a.neural_score > b.neural_score;
                         return a.peptide.residues < b.peptide.residues;
                     });
    return pooled;
}

namespace {

DenovoRow make_row(const ModelParams& params, const ProcessedSpectrum& s,
                   const DenovoCandidate& c, int predicted_length, double tol_ppm) {
    DenovoRow row;
    row.title = s.title;
    row.peptide = c.peptide.residues;
    row.modifications = format_mods(c.peptide);
    row.predicted_length = predicted_length;
    row.length_used = static_cast<int>(c.peptide.residues.size());
    row.neural_score = c.neural_score;
    if (c.peptide.residues.size() >= 2) {
        row.cosine_similarity = predicted_spectrum_cosine(params, s, c.peptide, tol_ppm);
        row.fragment_coverage = fragment_coverage(s, c.peptide, tol_ppm);
    }
    row.high_confidence = row.fragment_coverage == 1.0;
    return row;
}

}  // namespace

DenovoRunResult regular_denovo(const ModelParams& params,
                               const std::vector<ProcessedSpectrum>& run,
                               const ModTable& mods, int beam, double tol_ppm) {
    DenovoRunResult res;
    res.pooled.reserve(run.size());
    for (const auto& s : run) {
        int L0 = 0;
        auto pooled = denovo_spectrum(params, s, mods, beam, tol_ppm, &L0);
        res.predicted_lengths.push_back(L0);
        if (!pooled.empty())
            res.records.push_back(make_row(params, s, pooled.front(), L0, tol_ppm));
        res.pooled.push_back(std::move(pooled));
    }
    return res;
}

EnrichedResult enriched_denovo(const ModelParams& params,
                               const std::vector<ProcessedSpectrum>& run,
                               const ModTable& mods,
                               const std::vector<std::string>& user_mods, int beam,
                               double tol_ppm) {
    DenovoRunResult regular = regular_denovo(params, run, mods, beam, tol_ppm);
    bool any = false;
    for (const auto& p : regular.pooled)
        if (!p.empty()) any = true;
    if (!any) throw DenovoError("nothing to compile: no de novo candidates in the run");

    // (1) compile candidate sequences, deduplicated, first-appearance order
    std::vector<ProteinEntry> proteins;
    std::set<std::string> seen;
    for (const auto& pooled : regular.pooled)
        for (const auto& c : pooled) {
            if (!seen.insert(c.peptide.residues).second) continue;
            proteins.push_back({"DN" + std::to_string(proteins.size() + 1), "", c.peptide.residues});
        }

    // (2) rank modifications by pooled candidate count
    std::map<std::string, int> mod_counts;
    for (const auto& pooled : regular.pooled)
        for (const auto& c : pooled) {
            std::set<std::string> names;
            for (const auto& m : c.peptide.mods)
                if (m.record.name != "Carbamidomethyl") names.insert(m.record.name);
            for (const auto& n : names) ++mod_counts[n];
        }
    std::vector<std::pair<std::string, int>> ranked(mod_counts.begin(), mod_counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> var_mods;
    for (const auto& [name, count] : ranked) {
        if (static_cast<int>(var_mods.size()) >= 4) break;
        var_mods.push_back(name);
    }
    for (const auto& u : user_mods) {
        if (std::find(var_mods.begin(), var_mods.end(), u) == var_mods.end()) {
            if (!mods.find_by_name(u)) throw DenovoError("unknown user modification: " + u);
            var_mods.push_back(u);
        }
    }

    // (3) whole-entry restricted re-search against the compiled database
    DigestParams dp;
    dp.enzyme = EnzymeRule::WholeEntry;
    dp.min_len = 1;
    dp.max_len = params.hp.L_max;
    PrecursorIndex index = build_index_from_fasta(proteins, dp, mods, true,
                                                  DecoyMode::FullReverse, var_mods,
                                                  /*with_decoys=*/false);
    SearchConfig cfg;
    cfg.mode = SearchMode::Restricted;
    cfg.top_k = 10;
    cfg.precursor_tol_ppm = tol_ppm;
    cfg.fragment_tol_ppm = tol_ppm;

    EnrichedResult res;
    res.compiled_fasta = serialize_fasta(proteins);
    res.variable_mods = var_mods;
    std::map<std::string, std::size_t> record_by_title;
    for (std::size_t i = 0; i < regular.records.size(); ++i)
        record_by_title[regular.records[i].title] = i;

    for (std::size_t si = 0; si < run.size(); ++si) {
        const auto& s = run[si];
        const int L0 = regular.predicted_lengths[static_cast<std::size_t>(si)];
        std::vector<DenovoCandidate> cands;
        for (const auto& rec : search_spectrum(s, index, mods, cfg)) {
            int len = static_cast<int>(rec.peptide.residues.size());
            if (std::abs(len - L0) > 2) continue;  // keep the length-window invariant
            cands.push_back({rec.peptide, len, 0.0, 0.0});
        }
        if (!regular.pooled[si].empty()) cands.push_back(regular.pooled[si].front());
        if (cands.empty()) continue;
        std::vector<Peptide> peps;
        for (const auto& c : cands) peps.push_back(c.peptide);
        std::vector<double> scores = joint_scores(params, s, peps);
        std::size_t best = 0;
        for (std::size_t i = 0; i < cands.size(); ++i) {
            cands[i].neural_score = scores[i];
            if (scores[i] > scores[best]) best = i;
        }
        res.records.push_back(make_row(params, s, cands[best], L0, tol_ppm));
    }
    return res;
}

double null_score_threshold(const ModelParams& params,
                            const std::vector<ProcessedSpectrum>& run,
                            const std::vector<DenovoRow>& records, std::uint64_t seed,
                            double percentile) {
    std::map<std::string, const ProcessedSpectrum*> by_title;
    for (const auto& s : run) by_title[s.title] = &s;
    std::mt19937_64 rng(seed);
    std::vector<double> null_scores;
    for (const auto& r : records) {
        auto it = by_title.find(r.title);
        if (it == by_title.end()) continue;
        Peptide shuffled;
        shuffled.residues = r.peptide;
        std::shuffle(shuffled.residues.begin(), shuffled.residues.end(), rng);
        null_scores.push_back(joint_score(params, *it->second, shuffled));
    }
    if (null_scores.empty()) return -std::numeric_limits<double>::infinity();
    std::sort(null_scores.begin(), null_scores.end());
    auto idx = static_cast<std::size_t>(percentile * (null_scores.size() - 1));
    return null_scores[idx];
}

QcResult qc_filter(const std::vector<DenovoRow>& records, const FilterConfig& cfg) {
    QcResult res;
    for (const auto& r : records) {
        if (r.neural_score < cfg.min_neural_score) continue;
        if (r.cosine_similarity < cfg.min_cosine) continue;
        if (cfg.require_full_coverage && r.fragment_coverage != 1.0) continue;
        res.kept.push_back(r);
        if (r.fragment_coverage == 1.0) res.high_confidence.push_back(res.kept.back());
    }
    return res;
}

}  // namespace puf

#include "puf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace puf {

namespace {

std::string random_protein(std::mt19937_64& rng, int len) {
    // Residue frequencies tilted so tryptic peptides average ~10 residues.
    static const std::string pool = "AAACDDEEFGGGHIKKKKKLLLLMNPPQRRRRSSSTTTVVVWY";
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::string s;
    s.reserve(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) s += pool[pick(rng)];
    return s;
}

}  // namespace

SynthOutput make_synthetic(const SynthConfig& cfg, const ModTable& mods) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    SynthOutput out;
    if (!cfg.source_proteins.empty()) {
        out.proteins = cfg.source_proteins;
    } else {
        for (int i = 0; i < cfg.n_proteins; ++i)
            out.proteins.push_back({"SYN" + std::to_string(i + 1), "synthetic",
                                    random_protein(rng, cfg.protein_len)});
    }

    std::vector<Peptide> pool;
    for (const auto& prot : out.proteins)
        for (auto& pep : digest(prot, cfg.digest)) {
            apply_fixed_carbamidomethyl(pep, mods);
            pool.push_back(std::move(pep));
        }
    if (pool.empty() && !cfg.pure_noise)
        throw ChemError("synthetic generator: digestion produced no peptides");

    auto jitter = [&](double mz) {
        if (cfg.mz_jitter_ppm <= 0.0) return mz;
        double ppm = gauss(rng) * cfg.mz_jitter_ppm / 3.0;
        ppm = std::clamp(ppm, -cfg.mz_jitter_ppm, cfg.mz_jitter_ppm);
        return mz * (1.0 + ppm * 1e-6);
    };

    for (int i = 0; i < cfg.n_spectra; ++i) {
        std::ostringstream title;
        title << "synth-" << cfg.seed << "-";
        title.width(5);
        title.fill('0');
        title << i + 1;

        Spectrum sp;
        sp.title = title.str();
        sp.charge = cfg.charge;

        if (cfg.pure_noise) {
            double neutral = 800.0 + uni(rng) * 2200.0;
            sp.precursor_mz = (neutral + cfg.charge * kProtonMass) / cfg.charge;
            int n = std::max(20, cfg.noise_peaks);
            for (int k = 0; k < n; ++k)
                sp.peaks.push_back({100.0 + uni(rng) * (neutral - 100.0),
                                    0.05 + uni(rng) * 0.95});
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
            Peptide pep = pool[pick(rng)];
            if (uni(rng) < cfg.modified_fraction) {
                std::vector<std::string> choices =
                    cfg.single_ptm.empty() ? cfg.variable_mods
                                           : std::vector<std::string>{cfg.single_ptm};
                if (!choices.empty()) {
                    std::uniform_int_distribution<std::size_t> cpick(0, choices.size() - 1);
                    const std::string& name = choices[cpick(rng)];
                    std::vector<std::pair<int, const ModificationRecord*>> sites;
                    for (const auto& rec : mods.records) {
                        if (rec.name != name) continue;
                        if (rec.position == ModPosition::Anywhere) {
                            for (int pos = 0;
                                 pos < static_cast<int>(pep.residues.size()); ++pos)
                                if (site_allowed(rec, pep.residues, pos))
                                    sites.emplace_back(pos, &rec);
                        } else if (rec.position == ModPosition::AnyNTerm &&
                                   site_allowed(rec, pep.residues, kModPosNTerm)) {
                            sites.emplace_back(kModPosNTerm, &rec);
                        } else if (rec.position == ModPosition::AnyCTerm &&
                                   site_allowed(rec, pep.residues, kModPosCTerm)) {
                            sites.emplace_back(kModPosCTerm, &rec);
                        }
                    }
                    std::erase_if(sites, [&](const auto& cand) {
                        for (const auto& m : pep.mods)
                            if (m.pos == cand.first) return true;
                        return false;
                    });
                    if (!sites.empty()) {
                        std::uniform_int_distribution<std::size_t> spick(0, sites.size() - 1);
                        auto [pos, rec] = sites[spick(rng)];
                        pep.mods.push_back({pos, *rec});
                    }
                }
            }
            double neutral = peptide_neutral_mass(pep);
            sp.precursor_mz = jitter((neutral + cfg.charge * kProtonMass) / cfg.charge);

            const int L = static_cast<int>(pep.residues.size());
            for (const auto& f : generate_fragments(pep, 1, {true, true})) {
                if (uni(rng) > cfg.frag_detect_prob) continue;
                double base = f.series == IonSeries::Y ? 1.0 : cfg.b_y_balance;
                double shape = 0.3 + 0.7 * std::sin(3.14159265358979 * f.index / L);
                double inten = base * shape;
                if (f.loss != NeutralLoss::None) inten *= cfg.loss_intensity;
                sp.peaks.push_back({jitter(f.mz), inten});
            }
            for (int k = 0; k < cfg.noise_peaks; ++k)
                sp.peaks.push_back({100.0 + uni(rng) * (neutral - 100.0),
                                    0.02 + uni(rng) * 0.1});
            out.truth.push_back({sp.title, std::move(pep), cfg.charge});
        }
        std::sort(sp.peaks.begin(), sp.peaks.end(),
                  [](const Peak& a, const Peak& b) { return a.mz < b.mz; });
        out.spectra.push_back(std::move(sp));
    }
    return out;
}

std::string format_truth_tsv(const std::vector<SynthTruth>& truth) {
    std::ostringstream out;
    out << "title\tpeptide\tmodifications\tcharge\n";
    for (const auto& t : truth)
        out << t.title << '\t' << t.peptide.residues << '\t' << format_mods(t.peptide)
            << '\t' << t.charge << '\n';
    return out.str();
}

std::vector<SynthTruth> parse_truth_tsv(const std::string& text, const ModTable& mods) {
    std::vector<SynthTruth> out;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (line.rfind("title\t", 0) == 0) continue;
        }
        std::vector<std::string> cols;
        std::size_t start = 0;
        while (true) {
            std::size_t tab = line.find('\t', start);
            cols.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (cols.size() < 4) throw ChemError("truth TSV: expected 4 columns");
        SynthTruth t;
        t.title = cols[0];
        t.peptide.residues = cols[1];
        t.peptide.mods = parse_mods(cols[2], mods, cols[1]);
        t.charge = std::stoi(cols[3]);
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace puf

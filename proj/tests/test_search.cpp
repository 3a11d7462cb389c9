#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "puf/search.hpp"

using namespace puf;

namespace {

ModTable table() {
    return parse_modification_table(
        "Carbamidomethyl\tC\tAnywhere\t57.021464\n"
        "Oxidation\tM\tAnywhere\t15.994915\n"
        "Phospho\tS\tAnywhere\t79.966331\n");
}

ProcessedSpectrum theo(const Peptide& p, int charge = 2) {
    ProcessedSpectrum s;
    s.title = "t-" + p.residues;
    s.charge = charge;
    s.precursor_neutral_mass = peptide_neutral_mass(p);
    s.precursor_mz = (s.precursor_neutral_mass + charge * kProtonMass) / charge;
    double inten = 1.0;
    for (const auto& f : generate_fragments(p, 1, {true, true})) {
        s.peaks.push_back({f.mz, inten});
        inten = inten * 0.9 + 0.05;
    }
    std::sort(s.peaks.begin(), s.peaks.end(),
              [](const Peak& a, const Peak& b) { return a.mz < b.mz; });
    double mx = 0.0;
    for (auto& pk : s.peaks) mx = std::max(mx, pk.intensity);
    for (auto& pk : s.peaks) pk.intensity /= mx;
    return s;
}

PSMRecord rec(const std::string& title, double kernel, bool decoy,
              double neural = 0.0) {
    PSMRecord r;
    r.title = title;
    r.kernel_score = kernel;
    r.neural_score = neural;
    r.is_decoy = decoy;
    return r;
}

}  // namespace

TEST_CASE("kernel score basics and oracle") {
    Peptide p{"AGDSKLER", {}};
    auto s = theo(p);
    CHECK(kernel_score(s, p, 10.0) > 0.0);

    ProcessedSpectrum noise;
    noise.precursor_neutral_mass = peptide_neutral_mass(p);
    noise.peaks = {{50.111, 1.0}};
    CHECK(kernel_score(noise, p, 10.0) == 0.0);

    // self-match dominates a mutated candidate on a noiseless spectrum
    Peptide other{"AGDSKLDR", {}};
    CHECK(kernel_score(s, p, 10.0) > kernel_score(s, other, 10.0));

    // independent reimplementation oracle on random pairs
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> aa(0, 19), len(4, 12);
    for (int trial = 0; trial < 100; ++trial) {
        std::string seq;
        int L = len(rng);
        for (int i = 0; i < L; ++i) seq += kResidueAlphabet[aa(rng)];
        Peptide cand{seq, {}};
        auto spec = theo(trial % 2 ? cand : p);
        double got = kernel_score(spec, cand, 10.0);
        // oracle: direct double loop over fragments and peaks
        double sum = 0.0;
        int nb = 0, ny = 0;
        for (const auto& f : generate_fragments(cand, 2, {true, true})) {
            double best = -1.0;
            for (const auto& pk : spec.peaks)
                if (std::abs(pk.mz - f.mz) / f.mz * 1e6 <= 10.0)
                    best = std::max(best, pk.intensity);
            if (best < 0.0) continue;
            sum += best;
            (f.series == IonSeries::B ? nb : ny) += 1;
        }
        double expect = nb + ny == 0 ? 0.0
                                     : std::log1p(sum) + std::lgamma(nb + 1.0) +
                                           std::lgamma(ny + 1.0);
        CHECK(got == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("top_k defaults by enzyme") {
    CHECK(default_top_k(EnzymeRule::Trypsin) == 10);
    CHECK(default_top_k(EnzymeRule::WholeEntry) == 10);
    CHECK(default_top_k(EnzymeRule::NonSpecific) == 20);
}

TEST_CASE("search_spectrum ranks and truncates") {
    auto t = table();
    std::vector<IndexEntry> entries;
    Peptide truth{"AGDSKLER", {}};
    entries.push_back({0.0, truth, {"P1"}, false});
    // isobaric-ish competitors within tolerance: permutations
    entries.push_back({0.0, Peptide{"GADSKLER", {}}, {"P2"}, false});
    entries.push_back({0.0, Peptide{"RELKSDGA", {}}, {"D1"}, true});
    auto idx = PrecursorIndex::build(std::move(entries));
    auto s = theo(truth);
    SearchConfig cfg;
    cfg.mode = SearchMode::Restricted;
    cfg.top_k = 2;
    auto recs = search_spectrum(s, idx, t, cfg);
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].rank == 1);
    CHECK(recs[1].rank == 2);
    CHECK(recs[0].peptide.residues == "AGDSKLER");
    CHECK(recs[0].kernel_score >= recs[1].kernel_score);
}

TEST_CASE("q-values by hand enumeration") {
    std::vector<PSMRecord> r{rec("a", 10, false), rec("b", 9, false), rec("c", 8, false),
                             rec("d", 7, true)};
    compute_qvalues(r, ScoreField::Kernel);
    CHECK(r[0].q_value == doctest::Approx(0.0));
    CHECK(r[1].q_value == doctest::Approx(0.0));
    CHECK(r[2].q_value == doctest::Approx(0.0));
    CHECK(r[3].q_value == doctest::Approx(1.0 / 3.0));

    std::vector<PSMRecord> alld{rec("a", 5, true), rec("b", 4, true)};
    compute_qvalues(alld, ScoreField::Kernel);
    CHECK(alld[0].q_value == doctest::Approx(1.0));
    CHECK(alld[1].q_value == doctest::Approx(1.0));

    // tie: decoy ranked ahead of target at the same score (pessimistic)
    std::vector<PSMRecord> tie{rec("t", 5, false), rec("d", 5, true)};
    compute_qvalues(tie, ScoreField::Kernel);
    CHECK(tie[0].q_value == doctest::Approx(1.0));
}

TEST_CASE("q-value monotonicity property") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> score(0.0, 10.0);
    std::bernoulli_distribution decoy(0.4);
    std::vector<PSMRecord> r;
    for (int i = 0; i < 300; ++i)
        r.push_back(rec("s" + std::to_string(i), score(rng), decoy(rng)));
    compute_qvalues(r, ScoreField::Kernel);
    std::stable_sort(r.begin(), r.end(), [](const PSMRecord& a, const PSMRecord& b) {
        return a.kernel_score > b.kernel_score;
    });
    for (std::size_t i = 1; i < r.size(); ++i)
        CHECK(r[i].q_value >= r[i - 1].q_value - 1e-12);
}

TEST_CASE("rescore gate and fdr filter") {
    auto t = table();
    Hyper hp;
    hp.d_model = 16;
    hp.n_heads = 2;
    ModelParams params = ModelParams::init(hp, Vocab::from_table(t));

    // Construct a run where half of the spectra have confident kernel hits and
    // half are decoy-topped (gate failures once q-values are computed).
    std::vector<std::vector<PSMRecord>> per_spectrum;
    std::vector<ProcessedSpectrum> spectra;
    std::vector<std::string> good_seqs{"AGDSKLER", "LLEVTKNR", "MSTPEKFR",
                                       "WGDHAKER", "YSTADKLR", "PGNVSKTR"};
    for (const auto& seq : good_seqs) {
        Peptide p{seq, {}};
        auto s = theo(p);
        spectra.push_back(s);
        PSMRecord top = rec(s.title, 20.0, false);
        top.peptide = p;
        top.rank = 1;
        PSMRecord runner = rec(s.title, 5.0, false);
        runner.peptide = Peptide{seq.substr(1) + seq[0], {}};
        runner.rank = 2;
        per_spectrum.push_back({top, runner});
    }
    for (int i = 0; i < 2; ++i) {
        Peptide p{i == 0 ? "AAAAGGGR" : "GGGGAAAK", {}};
        auto s = theo(p);
        s.title += "-decoy";
        spectra.push_back(s);
        PSMRecord top = rec(s.title, 1.0 + i * 0.1, true);
        top.peptide = p;
        top.rank = 1;
        per_spectrum.push_back({top});
    }
    SearchConfig cfg;
    RescoreStats st;
    auto final_psms = rescore_run(per_spectrum, spectra, params, t, cfg, &st);
    CHECK(st.spectra_with_candidates == 8);
    // decoy-topped spectra have q = 1 at the bottom: gate excludes them
    CHECK(st.gate_passed == 6);
    for (const auto& r : final_psms) {
        CHECK(!r.is_decoy);
        CHECK(r.q_value <= cfg.fdr_target);
        CHECK(r.title.find("-decoy") == std::string::npos);
        CHECK(r.fragment_coverage >= 0.0);
    }
    // closure: every reported title was in the kernel pass
    for (const auto& r : final_psms) {
        bool seen = false;
        for (const auto& s : spectra) seen = seen || s.title == r.title;
        CHECK(seen);
    }
}

TEST_CASE("finetune refuses tiny runs") {
    auto t = table();
    Hyper hp;
    hp.d_model = 16;
    hp.n_heads = 2;
    ModelParams params = ModelParams::init(hp, Vocab::from_table(t));
    Peptide p{"AGDSKLER", {}};
    auto s = theo(p);
    PSMRecord top = rec(s.title, 10.0, false);
    top.peptide = p;
    std::vector<std::vector<PSMRecord>> per_spectrum{{top}};
    std::vector<ProcessedSpectrum> spectra{s};
    CHECK_THROWS_AS(finetune(params, per_spectrum, spectra, t, SearchConfig{}),
                    SearchError);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "puf/index.hpp"
#include "puf/synth.hpp"

using namespace puf;

namespace {

ModTable table() {
    return parse_modification_table(
        "Carbamidomethyl\tC\tAnywhere\t57.021464\n"
        "Oxidation\tM\tAnywhere\t15.994915\n"
        "Phospho\tS\tAnywhere\t79.966331\n"
        "Deamidated\tN\tAnywhere\t0.984016\n");
}

}  // namespace

TEST_CASE("fixed seed reproduces serialized output byte for byte") {
    auto t = table();
    SynthConfig cfg;
    cfg.n_proteins = 4;
    cfg.protein_len = 120;
    cfg.n_spectra = 30;
    cfg.variable_mods = {"Oxidation", "Phospho"};
    cfg.seed = 123;
    auto a = make_synthetic(cfg, t);
    auto b = make_synthetic(cfg, t);
    CHECK(serialize_mgf(a.spectra) == serialize_mgf(b.spectra));
    CHECK(serialize_fasta(a.proteins) == serialize_fasta(b.proteins));
    CHECK(format_truth_tsv(a.truth) == format_truth_tsv(b.truth));

    cfg.seed = 124;
    auto c = make_synthetic(cfg, t);
    CHECK(serialize_mgf(a.spectra) != serialize_mgf(c.spectra));
}

TEST_CASE("basic shape and title scheme") {
    auto t = table();
    SynthConfig cfg;
    cfg.n_proteins = 3;
    cfg.protein_len = 100;
    cfg.n_spectra = 12;
    cfg.seed = 7;
    auto out = make_synthetic(cfg, t);
    REQUIRE(out.spectra.size() == 12);
    REQUIRE(out.truth.size() == 12);
    REQUIRE(out.proteins.size() == 3);
    CHECK(out.spectra[0].title == "synth-7-00001");
    CHECK(out.spectra[11].title == "synth-7-00012");
    for (std::size_t i = 0; i < out.spectra.size(); ++i) {
        CHECK(out.truth[i].title == out.spectra[i].title);
        CHECK(out.spectra[i].charge == cfg.charge);
        CHECK(out.spectra[i].peaks.size() >= 2);
        for (std::size_t k = 1; k < out.spectra[i].peaks.size(); ++k)
            CHECK(out.spectra[i].peaks[k].mz >= out.spectra[i].peaks[k - 1].mz);
        // precursor m/z consistent with the truth peptide up to the jitter
        double m = peptide_neutral_mass(out.truth[i].peptide);
        double mz = (m + cfg.charge * kProtonMass) / cfg.charge;
        CHECK(std::abs(out.spectra[i].precursor_mz - mz) / mz * 1e6 <=
              cfg.mz_jitter_ppm + 1e-9);
        // every C carries the fixed modification
        for (std::size_t pos = 0; pos < out.truth[i].peptide.residues.size(); ++pos)
            if (out.truth[i].peptide.residues[pos] == 'C') {
                bool covered = false;
                for (const auto& mod : out.truth[i].peptide.mods)
                    covered = covered || (mod.pos == static_cast<int>(pos) &&
                                          mod.record.name == "Carbamidomethyl");
                CHECK(covered);
            }
    }
}

TEST_CASE("noiseless spectra are fully explained by the truth peptide") {
    auto t = table();
    SynthConfig cfg;
    cfg.n_proteins = 3;
    cfg.protein_len = 150;
    cfg.n_spectra = 10;
    cfg.noise_peaks = 0;
    cfg.mz_jitter_ppm = 0.0;
    cfg.frag_detect_prob = 1.0;
    cfg.modified_fraction = 0.0;
    cfg.seed = 11;
    auto out = make_synthetic(cfg, t);
    for (std::size_t i = 0; i < out.spectra.size(); ++i) {
        auto ps = preprocess(out.spectra[i]);
        auto ann = annotate_peaks(ps, out.truth[i].peptide, 5.0);
        for (const auto& a : ann) CHECK(a.label != IonLabel::None);
        CHECK(fragment_coverage(ps, out.truth[i].peptide, 5.0) ==
              doctest::Approx(1.0));
    }
}

TEST_CASE("single-ptm mode only uses the named modification") {
    auto t = table();
    SynthConfig cfg;
    cfg.n_proteins = 5;
    cfg.protein_len = 200;
    cfg.n_spectra = 60;
    cfg.modified_fraction = 1.0;
    cfg.single_ptm = "Phospho";
    cfg.seed = 3;
    auto out = make_synthetic(cfg, t);
    int with_mod = 0;
    for (const auto& tr : out.truth)
        for (const auto& mod : tr.peptide.mods)
            if (mod.record.name != "Carbamidomethyl") {
                CHECK(mod.record.name == "Phospho");
                CHECK(tr.peptide.residues[mod.pos] == 'S');
                ++with_mod;
            }
    CHECK(with_mod > 0);
    for (const auto& tr : out.truth) {
        int n_var = 0;
        for (const auto& mod : tr.peptide.mods)
            if (mod.record.name != "Carbamidomethyl") ++n_var;
        CHECK(n_var <= 1);
    }
}

TEST_CASE("pure noise mode has no truth rows") {
    auto t = table();
    SynthConfig cfg;
    cfg.pure_noise = true;
    cfg.n_spectra = 8;
    cfg.seed = 2;
    auto out = make_synthetic(cfg, t);
    CHECK(out.truth.empty());
    REQUIRE(out.spectra.size() == 8);
    for (const auto& s : out.spectra) {
        CHECK(s.peaks.size() >= 20);
        double m = (s.precursor_mz - kProtonMass) * s.charge;
        CHECK(m >= 700.0);
        CHECK(m <= 3100.0);
    }
}

TEST_CASE("truth tsv round trip") {
    auto t = table();
    SynthConfig cfg;
    cfg.n_proteins = 3;
    cfg.protein_len = 120;
    cfg.n_spectra = 15;
    cfg.variable_mods = {"Oxidation"};
    cfg.modified_fraction = 0.5;
    cfg.seed = 5;
    auto out = make_synthetic(cfg, t);
    auto text = format_truth_tsv(out.truth);
    CHECK(text.rfind("title\tpeptide\tmodifications\tcharge", 0) == 0);
    auto back = parse_truth_tsv(text, t);
    REQUIRE(back.size() == out.truth.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].title == out.truth[i].title);
        CHECK(back[i].peptide.residues == out.truth[i].peptide.residues);
        CHECK(back[i].charge == out.truth[i].charge);
        CHECK(format_mods(back[i].peptide) == format_mods(out.truth[i].peptide));
    }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "puf/chem.hpp"

using namespace puf;

namespace {

const char* kTableText =
    "name\tsite\tposition\tdelta_mass\n"
    "Carbamidomethyl\tC\tAnywhere\t57.021464\n"
    "Oxidation\tM\tAnywhere\t15.994915\n"
    "Crotonyl\tK\tAnywhere\t68.026215\n"
    "Acetyl\tK\tAnywhere\t42.010565\n"
    "Acetyl\t*\tAnyN-term\t42.010565\n"
    "Phospho\tS\tAnywhere\t79.966331\n"
    "Deamidated\tN\tAnywhere\t0.984016\n"
    "Deamidated\tQ\tAnywhere\t0.984016\n"
    "Amidated\t*\tAnyC-term\t-0.984016\n";

ModTable table() { return parse_modification_table(kTableText); }

}  // namespace

TEST_CASE("residue masses and peptide mass") {
    CHECK(residue_mass('G') == doctest::Approx(57.021464).epsilon(1e-12));
    CHECK(residue_mass('W') == doctest::Approx(186.079313).epsilon(1e-12));
    CHECK(residue_mass('L') == residue_mass('I'));
    CHECK(residue_mass('X') == 0.0);
    CHECK_THROWS_AS(residue_mass('B'), ChemError);

    // Independent sum: P+E+P+T+I+D+E + water
    double expect = 97.052764 + 129.042593 + 97.052764 + 101.047678 + 113.084064 +
                    115.026943 + 129.042593 + 18.010565;
    Peptide p{"PEPTIDE", {}};
    CHECK(peptide_neutral_mass(p) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("crotonylated K is isobaric with P plus V") {
    auto t = table();
    const ModificationRecord* cro = t.find_by_name("Crotonyl");
    REQUIRE(cro != nullptr);
    double k_cro = residue_mass('K') + cro->delta_mass;
    double pv = residue_mass('P') + residue_mass('V');
    CHECK(std::abs(k_cro - pv) < 1e-4);
}

TEST_CASE("modification table parsing") {
    auto t = table();
    CHECK(t.records.size() == 9);
    // token ids shared per name, assigned in first-appearance order
    CHECK(t.token_for_name("Carbamidomethyl") == 0);
    CHECK(t.token_for_name("Acetyl") == 3);
    CHECK(t.records[4].token_id == t.records[3].token_id);
    CHECK(t.token_count == 7);

    auto hits = t.find_by_delta(0.984, 0.01);
    std::set<std::string> names;
    for (auto* r : hits) names.insert(r->name);
    CHECK(names == std::set<std::string>{"Deamidated"});

    CHECK_THROWS_AS(parse_modification_table("Oxidation\tM\tAnywhere\tabc\n"), ChemError);
    CHECK_THROWS_AS(parse_modification_table("Big\t*\tAnywhere\t1500.0\n"), ChemError);
    CHECK_THROWS_AS(
        parse_modification_table("A\tM\tAnywhere\t1.0\nA\tM\tAnywhere\t2.0\n"),
        ChemError);
}

TEST_CASE("mods format round trip") {
    auto t = table();
    Peptide p{"MKSC", {}};
    p.mods.push_back({0, *t.find_by_name("Oxidation")});
    p.mods.push_back({kModPosNTerm, t.records[4]});
    std::string s = format_mods(p);
    CHECK(s == "Acetyl@N-term;Oxidation@1");
    auto parsed = parse_mods(s, t, p.residues);
    Peptide q{"MKSC", parsed};
    CHECK(p == q);
    CHECK(format_mods(Peptide{"AG", {}}) == "");
}

TEST_CASE("tryptic digest") {
    ProteinEntry prot{"P1", "", "MKRAGDDKPLLERSTK"};
    DigestParams dp;
    dp.missed_cleavages = 1;
    dp.min_len = 2;
    dp.max_len = 45;
    auto peps = digest(prot, dp);
    std::set<std::string> seqs;
    for (const auto& p : peps) seqs.insert(p.residues);
    // cleavage after K2 (not before P since next is R), R3, R13 (K8 followed by P)
    CHECK(seqs.count("MK"));
    CHECK(seqs.count("AGDDKPLLER"));
    CHECK(seqs.count("STK"));
    CHECK(seqs.count("MKR"));  // 1 missed cleavage
    CHECK(!seqs.count("AGDDK"));  // KP is not a cleavage site

    ProteinEntry with_x{"P2", "", "AGXKLLR"};
    for (const auto& p : digest(with_x, dp))
        CHECK(p.residues.find('X') == std::string::npos);
}

TEST_CASE("nonspecific and whole-entry digest") {
    ProteinEntry prot{"P1", "", "AGDDK"};
    DigestParams dp;
    dp.enzyme = EnzymeRule::NonSpecific;
    dp.min_len = 4;
    dp.max_len = 5;
    auto peps = digest(prot, dp);
    std::set<std::string> seqs;
    for (const auto& p : peps) seqs.insert(p.residues);
    CHECK(seqs == std::set<std::string>{"AGDD", "GDDK", "AGDDK"});

    dp.enzyme = EnzymeRule::WholeEntry;
    dp.min_len = 1;
    auto whole = digest(prot, dp);
    REQUIRE(whole.size() == 1);
    CHECK(whole[0].residues == "AGDDK");
}

TEST_CASE("decoy generation") {
    ProteinEntry prot{"P1", "", "AGDKLLER"};
    auto full = generate_decoy(prot, DecoyMode::FullReverse);
    CHECK(full.accession == "DECOY_P1");
    CHECK(full.sequence == "RELLKDGA");
    auto tryp = generate_decoy(prot, DecoyMode::TrypticReverse);
    // segments AGDK | LLER reversed keeping terminal K/R
    CHECK(tryp.sequence == "DGAKELLR");
}

TEST_CASE("fragment generation basics") {
    Peptide p{"AG", {}};
    auto frags = generate_fragments(p, 1);
    REQUIRE(frags.size() == 2);
    CHECK(frags[0].series == IonSeries::B);
    CHECK(frags[0].mz == doctest::Approx(71.037114 + 1.007276466).epsilon(1e-12));
    CHECK(frags[1].series == IonSeries::Y);
    CHECK(frags[1].mz ==
          doctest::Approx(57.021464 + 18.010565 + 1.007276466).epsilon(1e-12));
}

TEST_CASE("neutral losses gated by composition") {
    // no S/T/E/D and no K/R/N/Q: no loss fragments
    auto plain = generate_fragments(Peptide{"AGAG", {}}, 1, {true, true});
    for (const auto& f : plain) CHECK(f.loss == NeutralLoss::None);
    // S allows H2O loss on fragments containing it
    auto with_s = generate_fragments(Peptide{"SGAG", {}}, 1, {true, true});
    bool b1_h2o = false, y1_h2o = false;
    for (const auto& f : with_s) {
        if (f.series == IonSeries::B && f.index == 1 && f.loss == NeutralLoss::H2O)
            b1_h2o = true;
        if (f.series == IonSeries::Y && f.index == 1 && f.loss == NeutralLoss::H2O)
            y1_h2o = true;
    }
    CHECK(b1_h2o);
    CHECK(!y1_h2o);  // y1 = G, contains no S/T/E/D
}

TEST_CASE("terminal mods fold into terminal fragments") {
    auto t = table();
    Peptide p{"AGK", {}};
    p.mods.push_back({kModPosNTerm, t.records[4]});  // Acetyl N-term
    auto frags = generate_fragments(p, 1);
    for (const auto& f : frags) {
        if (f.series == IonSeries::B && f.index == 1)
            CHECK(f.mz ==
                  doctest::Approx(71.037114 + 42.010565 + 1.007276466).epsilon(1e-9));
        if (f.series == IonSeries::Y && f.index == 1)
            CHECK(f.mz ==
                  doctest::Approx(128.094963 + 18.010565 + 1.007276466).epsilon(1e-9));
    }
}

TEST_CASE("fragment mass conservation property") {
    auto t = table();
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> len_d(2, 30);
    std::uniform_int_distribution<int> aa_d(0, 19);
    for (int trial = 0; trial < 1000; ++trial) {
        Peptide p;
        int L = len_d(rng);
        for (int i = 0; i < L; ++i) p.residues += kResidueAlphabet[aa_d(rng)];
        // random anywhere-mod on a legal site, if any
        std::uniform_int_distribution<std::size_t> rec_d(0, t.records.size() - 1);
        const auto& rec = t.records[rec_d(rng)];
        if (rec.position == ModPosition::Anywhere) {
            for (int i = 0; i < L; ++i)
                if (site_allowed(rec, p.residues, i)) {
                    p.mods.push_back({i, rec});
                    break;
                }
        }
        double total = peptide_neutral_mass(p);
        auto frags = generate_fragments(p, 1);
        for (const auto& bf : frags) {
            if (bf.series != IonSeries::B || bf.loss != NeutralLoss::None) continue;
            for (const auto& yf : frags) {
                if (yf.series != IonSeries::Y || yf.loss != NeutralLoss::None) continue;
                if (yf.index != L - bf.index) continue;
                double b_neutral = bf.mz - kProtonMass;
                double y_neutral = yf.mz - kProtonMass;
                CHECK(std::abs(b_neutral + y_neutral - total) < 1e-6);
            }
        }
    }
}

TEST_CASE("fixed carbamidomethyl") {
    auto t = table();
    Peptide p{"ACGC", {}};
    apply_fixed_carbamidomethyl(p, t);
    REQUIRE(p.mods.size() == 2);
    CHECK(p.mods[0].pos == 1);
    CHECK(p.mods[1].pos == 3);
    double expect = 71.037114 + 2 * (103.009185 + 57.021464) + 57.021464 + 18.010565;
    CHECK(peptide_neutral_mass(p) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("enzyme names") {
    CHECK(enzyme_from_string("trypsin") == EnzymeRule::Trypsin);
    CHECK(enzyme_from_string("nonspecific") == EnzymeRule::NonSpecific);
    CHECK(enzyme_from_string("whole") == EnzymeRule::WholeEntry);
    CHECK_THROWS_AS(enzyme_from_string("gluc"), ChemError);
}

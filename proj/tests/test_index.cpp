#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>
#include <set>

#include "puf/index.hpp"
#include "puf/msio.hpp"

using namespace puf;

namespace {

ModTable table() {
    return parse_modification_table(
        "Carbamidomethyl\tC\tAnywhere\t57.021464\n"
        "Oxidation\tM\tAnywhere\t15.994915\n"
        "Crotonyl\tK\tAnywhere\t68.026215\n"
        "Deamidated\tN\tAnywhere\t0.984016\n"
        "Deamidated\tQ\tAnywhere\t0.984016\n"
        "Acetyl\t*\tAnyN-term\t42.010565\n");
}

PrecursorIndex small_index(const std::vector<std::string>& seqs) {
    std::vector<IndexEntry> entries;
    for (const auto& s : seqs)
        entries.push_back({0.0, Peptide{s, {}}, {"P_" + s}, false});
    return PrecursorIndex::build(std::move(entries));
}

ProcessedSpectrum theoretical_spectrum(const Peptide& p, int charge = 2) {
    ProcessedSpectrum s;
    s.title = "theo";
    s.charge = charge;
    s.precursor_neutral_mass = peptide_neutral_mass(p);
    s.precursor_mz = (s.precursor_neutral_mass + charge * kProtonMass) / charge;
    for (const auto& f : generate_fragments(p, 1, {true, true}))
        s.peaks.push_back({f.mz, 1.0});
    std::sort(s.peaks.begin(), s.peaks.end(),
              [](const Peak& a, const Peak& b) { return a.mz < b.mz; });
    return s;
}

}  // namespace

TEST_CASE("restricted query ppm window") {
    auto idx = small_index({"AGDK"});
    double m = peptide_neutral_mass(Peptide{"AGDK", {}});
    CHECK(idx.query_restricted(m, 10.0).size() == 1);
    CHECK(idx.query_restricted(m * (1.0 + 5e-6), 10.0).size() == 1);   // 5 ppm in
    CHECK(idx.query_restricted(m * (1.0 + 25e-6), 10.0).empty());     // 25 ppm out
    // window scales with mass: an absolute offset of 5 ppm of m stays inside
    CHECK(idx.query_restricted(m + 5e-6 * m, 10.0).size() == 1);
    CHECK(idx.query_restricted(m - 15e-6 * m, 10.0).empty());
}

TEST_CASE("open query enumerates legal sites") {
    auto t = table();
    auto idx = small_index({"AGNDKQ"});
    double base = peptide_neutral_mass(Peptide{"AGNDKQ", {}});
    auto open = idx.query_open(base + 0.984016, 10.0, t);
    // one candidate per N/Q site
    int deamid = 0;
    for (const auto& c : open) {
        REQUIRE(c.peptide.mods.size() == 1);
        if (c.peptide.mods[0].record.name == "Deamidated") {
            ++deamid;
            int pos = c.peptide.mods[0].pos;
            CHECK((c.peptide.residues[pos] == 'N' || c.peptide.residues[pos] == 'Q'));
        }
    }
    CHECK(deamid == 2);
}

TEST_CASE("open superset of restricted, brute-force oracle") {
    auto t = table();
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> len_d(5, 12);
    std::uniform_int_distribution<int> aa_d(0, 19);
    std::vector<std::string> seqs;
    for (int i = 0; i < 50; ++i) {
        std::string s;
        int L = len_d(rng);
        for (int j = 0; j < L; ++j) s += kResidueAlphabet[aa_d(rng)];
        seqs.push_back(s);
    }
    auto idx = small_index(seqs);
    std::uniform_real_distribution<double> mass_d(500.0, 1500.0);
    for (int q = 0; q < 50; ++q) {
        double query = q % 2 == 0 ? mass_d(rng)
                                  : peptide_neutral_mass(
                                        Peptide{seqs[static_cast<std::size_t>(q) %
                                                     seqs.size()],
                                                {}});
        auto restricted = idx.query_restricted(query, 10.0);
        auto open = idx.query_open(query, 10.0, t);
        CHECK(open.size() >= restricted.size());
        // brute-force restricted oracle
        std::multiset<std::string> expect, got;
        for (const auto& e : idx.entries()) {
            if (std::abs(e.neutral_mass - query) / query * 1e6 <= 10.0)
                expect.insert(e.peptide.residues);
        }
        for (const auto& c : restricted) got.insert(c.peptide.residues);
        CHECK(expect == got);
        // every restricted hit appears in open
        std::multiset<std::string> open_seqs;
        for (const auto& c : open)
            if (c.peptide.mods.empty()) open_seqs.insert(c.peptide.residues);
        CHECK(got == open_seqs);
    }
}

TEST_CASE("index cache round trip") {
    auto t = table();
    DigestParams dp;
    dp.min_len = 4;
    auto idx = build_index_from_fasta(
        {{"P1", "", "AGDMKCLLERAGNDKPKWWSTR"}}, dp, t, true,
        DecoyMode::TrypticReverse, {"Oxidation"});
    REQUIRE(!idx.empty());
    std::string path = "test_index_cache.bin";
    idx.save(path);
    auto loaded = PrecursorIndex::load(path);
    REQUIRE(loaded.entries().size() == idx.entries().size());
    for (std::size_t i = 0; i < idx.entries().size(); ++i) {
        CHECK(idx.entries()[i].peptide == loaded.entries()[i].peptide);
        CHECK(idx.entries()[i].neutral_mass ==
              doctest::Approx(loaded.entries()[i].neutral_mass).epsilon(1e-12));
        CHECK(idx.entries()[i].is_decoy == loaded.entries()[i].is_decoy);
        CHECK(idx.entries()[i].protein_refs == loaded.entries()[i].protein_refs);
    }
    // corrupt magic
    std::string bytes = read_file(path);
    bytes[0] = 'X';
    write_file(path, bytes);
    CHECK_THROWS(PrecursorIndex::load(path));
    std::remove(path.c_str());
}

TEST_CASE("decoys co-indexed") {
    auto t = table();
    DigestParams dp;
    dp.min_len = 4;
    auto idx = build_index_from_fasta({{"P1", "", "AGDMKCLLER"}}, dp, t);
    bool has_decoy = false, has_target = false;
    for (const auto& e : idx.entries()) {
        if (e.is_decoy) {
            has_decoy = true;
            CHECK(e.protein_refs[0].rfind("DECOY_", 0) == 0);
        } else {
            has_target = true;
        }
    }
    CHECK(has_decoy);
    CHECK(has_target);
}

TEST_CASE("annotate self spectrum fully") {
    Peptide p{"AGDSKLER", {}};
    auto s = theoretical_spectrum(p);
    auto ann = annotate_peaks(s, p, 10.0);
    REQUIRE(ann.size() == s.peaks.size());
    for (const auto& a : ann) {
        CHECK(a.label != IonLabel::None);
        CHECK(a.aa_count > 0);
    }
    CHECK(fragment_coverage(s, p, 10.0) == doctest::Approx(1.0));
}

TEST_CASE("annotate noise as none") {
    Peptide p{"AGDSKLER", {}};
    ProcessedSpectrum s;
    s.precursor_neutral_mass = peptide_neutral_mass(p);
    s.peaks = {{50.123, 1.0}, {61.777, 0.5}};
    for (const auto& a : annotate_peaks(s, p, 10.0)) {
        CHECK(a.label == IonLabel::None);
        CHECK(a.aa_count == 0);
    }
    CHECK(fragment_coverage(s, p, 10.0) == doctest::Approx(0.0));
}

TEST_CASE("partial coverage") {
    Peptide p{"AGD", {}};
    auto frags = generate_fragments(p, 1);
    ProcessedSpectrum s;
    s.precursor_neutral_mass = peptide_neutral_mass(p);
    for (const auto& f : frags)
        if (f.series == IonSeries::B && f.index == 1) s.peaks.push_back({f.mz, 1.0});
    CHECK(fragment_coverage(s, p, 10.0) == doctest::Approx(0.5));
}

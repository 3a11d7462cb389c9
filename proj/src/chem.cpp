#include "puf/chem.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace puf {

namespace {

constexpr double kUnsetMass = -1.0;

std::array<double, 26> make_mass_table() {
    std::array<double, 26> t{};
    t.fill(kUnsetMass);
    t['G' - 'A'] = 57.021464;
    t['A' - 'A'] = 71.037114;
    t['S' - 'A'] = 87.032028;
    t['P' - 'A'] = 97.052764;
    t['V' - 'A'] = 99.068414;
    t['T' - 'A'] = 101.047678;
    t['C' - 'A'] = 103.009185;
    t['L' - 'A'] = 113.084064;
    t['I' - 'A'] = 113.084064;
    t['N' - 'A'] = 114.042927;
    t['D' - 'A'] = 115.026943;
    t['Q' - 'A'] = 128.058578;
    t['K' - 'A'] = 128.094963;
    t['E' - 'A'] = 129.042593;
    t['M' - 'A'] = 131.040485;
    t['H' - 'A'] = 137.058912;
    t['F' - 'A'] = 147.068414;
    t['R' - 'A'] = 156.101111;
    t['Y' - 'A'] = 163.063329;
    t['W' - 'A'] = 186.079313;
    t['X' - 'A'] = 0.0;
    return t;
}

const std::array<double, 26> kMassTable = make_mass_table();

bool fragment_has_residue(std::string_view frag, std::string_view set) {
    return frag.find_first_of(set) != std::string_view::npos;
}

}  // namespace

double residue_mass(char aa) {
    if (aa < 'A' || aa > 'Z' || kMassTable[aa - 'A'] == kUnsetMass)
        throw ChemError(std::string("unknown residue '") + aa + "'");
    return kMassTable[aa - 'A'];
}

bool is_residue(char aa) {
    return kResidueAlphabet.find(aa) != std::string_view::npos;
}

std::string to_string(ModPosition p) {
    switch (p) {
        case ModPosition::Anywhere: return "Anywhere";
        case ModPosition::AnyNTerm: return "AnyN-term";
        case ModPosition::ProteinNTerm: return "ProteinN-term";
        case ModPosition::AnyCTerm: return "AnyC-term";
    }
    return "Anywhere";
}

ModPosition mod_position_from_string(const std::string& s) {
    if (s == "Anywhere" || s == "Normal" || s.empty()) return ModPosition::Anywhere;
    if (s == "AnyN-term") return ModPosition::AnyNTerm;
    if (s == "ProteinN-term") return ModPosition::ProteinNTerm;
    if (s == "AnyC-term") return ModPosition::AnyCTerm;
    throw ChemError("bad modification position: " + s);
}

bool Peptide::operator==(const Peptide& o) const {
    if (residues != o.residues || mods.size() != o.mods.size()) return false;
    auto key = [](const Peptide& p) {
        std::multiset<std::pair<int, std::string>> k;
        for (const auto& m : p.mods) k.emplace(m.pos, m.record.name);
        return k;
    };
    return key(*this) == key(o);
}

double peptide_neutral_mass(const Peptide& p) {
    double m = kWaterMass;
    for (char c : p.residues) m += residue_mass(c);
    for (const auto& mod : p.mods) m += mod.record.delta_mass;
    return m;
}

bool site_allowed(const ModificationRecord& record, const std::string& residues,
                  int pos, bool protein_nterm) {
    auto residue_ok = [&](char c) { return record.site == '*' || record.site == c; };
    switch (record.position) {
        case ModPosition::Anywhere:
            return pos >= 0 && pos < static_cast<int>(residues.size()) &&
                   residue_ok(residues[static_cast<std::size_t>(pos)]);
        case ModPosition::AnyNTerm:
            return pos == kModPosNTerm &&
                   (residues.empty() || residue_ok(residues.front()));
        case ModPosition::ProteinNTerm:
            return pos == kModPosNTerm && protein_nterm &&
                   (residues.empty() || residue_ok(residues.front()));
        case ModPosition::AnyCTerm:
            return pos == kModPosCTerm &&
                   (residues.empty() || residue_ok(residues.back()));
    }
    return false;
}

std::string format_mods(const Peptide& p) {
    std::vector<PlacedMod> sorted = p.mods;
    // Canonical order: N-term, then residue positions ascending, then C-term.
    auto key = [](int pos) {
        if (pos == kModPosNTerm) return -1;
        if (pos == kModPosCTerm) return std::numeric_limits<int>::max();
        return pos;
    };
    std::sort(sorted.begin(), sorted.end(), [&](const PlacedMod& a, const PlacedMod& b) {
        if (key(a.pos) != key(b.pos)) return key(a.pos) < key(b.pos);
        return a.record.name < b.record.name;
    });
    std::string out;
    for (const auto& m : sorted) {
        if (!out.empty()) out += ';';
        out += m.record.name;
        out += '@';
        if (m.pos == kModPosNTerm)
            out += "N-term";
        else if (m.pos == kModPosCTerm)
            out += "C-term";
        else
            out += std::to_string(m.pos + 1);
    }
    return out;
}

std::vector<PlacedMod> parse_mods(const std::string& text, const ModTable& table,
                                  const std::string& residues) {
    std::vector<PlacedMod> out;
    if (text.empty()) return out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ';')) {
        auto at = item.rfind('@');
        if (at == std::string::npos) throw ChemError("bad modification token: " + item);
        std::string name = item.substr(0, at);
        std::string postext = item.substr(at + 1);
        int pos;
        if (postext == "N-term")
            pos = kModPosNTerm;
        else if (postext == "C-term")
            pos = kModPosCTerm;
        else
            pos = std::stoi(postext) - 1;
        // Pick the record of this name whose site rule matches the position.
        const ModificationRecord* chosen = nullptr;
        for (const auto& r : table.records) {
            if (r.name != name) continue;
            if (site_allowed(r, residues, pos, true)) {
                chosen = &r;
                break;
            }
            if (!chosen) chosen = &r;  // fall back to name match
        }
        if (!chosen) throw ChemError("unknown modification: " + name);
        out.push_back({pos, *chosen});
    }
    return out;
}

const ModificationRecord* ModTable::find_by_name(const std::string& name) const {
    for (const auto& r : records)
        if (r.name == name) return &r;
    return nullptr;
}

std::vector<const ModificationRecord*> ModTable::find_by_delta(double delta,
                                                               double tol_da) const {
    std::vector<const ModificationRecord*> out;
    auto lo = std::lower_bound(by_mass.begin(), by_mass.end(), delta - tol_da,
                               [&](std::size_t i, double v) {
                                   return records[i].delta_mass < v;
                               });
    for (auto it = lo; it != by_mass.end(); ++it) {
        const auto& r = records[*it];
        if (r.delta_mass > delta + tol_da) break;
        out.push_back(&r);
    }
    return out;
}

int ModTable::token_for_name(const std::string& name) const {
    const auto* r = find_by_name(name);
    return r ? r->token_id : -1;
}

ModTable parse_modification_table(const std::string& text) {
    ModTable table;
    std::unordered_map<std::string, int> tokens;
    std::set<std::pair<std::string, std::string>> seen;  // (name, site+position)
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ls(line);
        std::string name, site, position, mass;
        std::getline(ls, name, '\t');
        std::getline(ls, site, '\t');
        std::getline(ls, position, '\t');
        std::getline(ls, mass, '\t');
        if (name == "name" && site == "site") continue;  // header row
        if (mass.empty())
            throw ChemError("modification table line " + std::to_string(lineno) +
                            ": expected 4 tab-separated columns");
        ModificationRecord rec;
        rec.name = name;
        rec.site = site.size() == 1 ? site[0] : '*';
        rec.position = mod_position_from_string(position);
        try {
            std::size_t used = 0;
            rec.delta_mass = std::stod(mass, &used);
            if (used != mass.size()) throw std::invalid_argument(mass);
        } catch (const std::exception&) {
            throw ChemError("modification table line " + std::to_string(lineno) +
                            ": non-numeric mass '" + mass + "'");
        }
        if (std::abs(rec.delta_mass) >= 1000.0)
            throw ChemError("modification table line " + std::to_string(lineno) +
                            ": |delta_mass| must be < 1000 Da");
        auto sitekey = std::make_pair(rec.name, site + "/" + position);
        if (!seen.insert(sitekey).second)
            throw ChemError("duplicate modification row: " + rec.name + " " + site);
        auto [it, inserted] = tokens.emplace(rec.name, table.token_count);
        if (inserted) ++table.token_count;
        rec.token_id = it->second;
        table.records.push_back(std::move(rec));
    }
    table.by_mass.resize(table.records.size());
    for (std::size_t i = 0; i < table.records.size(); ++i) table.by_mass[i] = i;
    std::sort(table.by_mass.begin(), table.by_mass.end(), [&](std::size_t a, std::size_t b) {
        return table.records[a].delta_mass < table.records[b].delta_mass;
    });
    return table;
}

ModTable load_modification_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ChemError("cannot open modification table: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_modification_table(buf.str());
}

std::vector<Peptide> digest(const ProteinEntry& entry, const DigestParams& params) {
    std::vector<std::string> seqs;
    const std::string& s = entry.sequence;
    const int n = static_cast<int>(s.size());
    if (params.enzyme == EnzymeRule::WholeEntry) {
        seqs.push_back(s);
    } else if (params.enzyme == EnzymeRule::NonSpecific) {
        for (int i = 0; i < n; ++i)
            for (int len = params.min_len; len <= params.max_len && i + len <= n; ++len)
                seqs.push_back(s.substr(static_cast<std::size_t>(i),
                                        static_cast<std::size_t>(len)));
    } else {
        // Trypsin: cut after K/R unless followed by P.
        std::vector<int> cuts{0};
        for (int i = 0; i < n - 1; ++i)
            if ((s[static_cast<std::size_t>(i)] == 'K' ||
                 s[static_cast<std::size_t>(i)] == 'R') &&
                s[static_cast<std::size_t>(i + 1)] != 'P')
                cuts.push_back(i + 1);
        cuts.push_back(n);
        const int nseg = static_cast<int>(cuts.size()) - 1;
        for (int a = 0; a < nseg; ++a) {
            for (int b = a; b < nseg && b - a <= params.missed_cleavages; ++b) {
                int len = cuts[static_cast<std::size_t>(b + 1)] -
                          cuts[static_cast<std::size_t>(a)];
                if (len < params.min_len || len > params.max_len) continue;
                seqs.push_back(s.substr(static_cast<std::size_t>(cuts[static_cast<std::size_t>(a)]),
                                        static_cast<std::size_t>(len)));
            }
        }
    }
    std::set<std::string> dedup;
    std::vector<Peptide> out;
    for (auto& seq : seqs) {
        int len = static_cast<int>(seq.size());
        if (len < params.min_len || len > params.max_len) continue;
        if (seq.find('X') != std::string::npos) continue;
        if (dedup.insert(seq).second) out.push_back(Peptide{std::move(seq), {}});
    }
    return out;
}

ProteinEntry generate_decoy(const ProteinEntry& entry, DecoyMode mode) {
    ProteinEntry d;
    d.accession = "DECOY_" + entry.accession;
    d.description = entry.description;
    std::string s = entry.sequence;
    if (mode == DecoyMode::FullReverse) {
        std::reverse(s.begin(), s.end());
    } else {
        // Reverse each inter-cleavage segment, keeping the C-terminal K/R fixed.
        std::size_t start = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            bool cut = (s[i] == 'K' || s[i] == 'R') &&
                       (i + 1 >= s.size() || s[i + 1] != 'P');
            bool last = i + 1 == s.size();
            if (cut || last) {
                std::size_t end = cut ? i : i + 1;  // exclusive of the kept K/R
                std::reverse(s.begin() + static_cast<std::ptrdiff_t>(start),
                             s.begin() + static_cast<std::ptrdiff_t>(end));
                start = i + 1;
            }
        }
    }
    d.sequence = std::move(s);
    return d;
}

std::vector<TheoreticalFragment> generate_fragments(const Peptide& p, int max_charge,
                                                    FragmentFlags losses) {
    const int len = static_cast<int>(p.residues.size());
    std::vector<TheoreticalFragment> out;
    if (len < 2) return out;

    // Per-position mass including mods; terminal mods fold into the end residues.
    std::vector<double> pos_mass(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i)
        pos_mass[static_cast<std::size_t>(i)] =
            residue_mass(p.residues[static_cast<std::size_t>(i)]);
    for (const auto& m : p.mods) {
        int i = m.pos == kModPosNTerm ? 0 : (m.pos == kModPosCTerm ? len - 1 : m.pos);
        pos_mass[static_cast<std::size_t>(i)] += m.record.delta_mass;
    }
    std::vector<double> prefix(static_cast<std::size_t>(len) + 1, 0.0);
    for (int i = 0; i < len; ++i)
        prefix[static_cast<std::size_t>(i) + 1] =
            prefix[static_cast<std::size_t>(i)] + pos_mass[static_cast<std::size_t>(i)];
    const double total = prefix[static_cast<std::size_t>(len)];

    auto emit = [&](IonSeries series, int index, double neutral) {
        std::string_view frag =
            series == IonSeries::B
                ? std::string_view(p.residues).substr(0, static_cast<std::size_t>(index))
                : std::string_view(p.residues)
                      .substr(static_cast<std::size_t>(len - index));
        struct LossSpec {
            NeutralLoss loss;
            double delta;
            bool enabled;
        };
        const LossSpec specs[] = {
            {NeutralLoss::None, 0.0, true},
            {NeutralLoss::H2O, kWaterMass,
             losses.h2o_loss && fragment_has_residue(frag, "STED")},
            {NeutralLoss::NH3, kAmmoniaMass,
             losses.nh3_loss && fragment_has_residue(frag, "KRNQ")},
        };
        for (const auto& spec : specs) {
            if (!spec.enabled) continue;
            for (int z = 1; z <= max_charge; ++z) {
                TheoreticalFragment f;
                f.series = series;
                f.index = index;
                f.loss = spec.loss;
                f.charge = z;
                f.aa_count = index;
                f.mz = (neutral - spec.delta + z * kProtonMass) / z;
                out.push_back(f);
            }
        }
    };

    for (int i = 1; i < len; ++i) emit(IonSeries::B, i, prefix[static_cast<std::size_t>(i)]);
    for (int i = 1; i < len; ++i)
        emit(IonSeries::Y, i, total - prefix[static_cast<std::size_t>(len - i)] + kWaterMass);
    return out;
}

void apply_fixed_carbamidomethyl(Peptide& p, const ModTable& table) {
    const auto* cam = table.find_by_name("Carbamidomethyl");
    if (!cam) return;
    for (int i = 0; i < static_cast<int>(p.residues.size()); ++i) {
        if (p.residues[static_cast<std::size_t>(i)] != 'C') continue;
        bool already = false;
        for (const auto& m : p.mods)
            if (m.pos == i) already = true;
        if (!already) p.mods.push_back({i, *cam});
    }
}

EnzymeRule enzyme_from_string(const std::string& s) {
    if (s == "trypsin") return EnzymeRule::Trypsin;
    if (s == "nonspecific") return EnzymeRule::NonSpecific;
    if (s == "whole") return EnzymeRule::WholeEntry;
    throw ChemError("unknown enzyme: " + s);
}

}  // namespace puf

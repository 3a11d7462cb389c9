#include "puf/index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace puf {

namespace {

struct EntryKey {
    std::string seq;
    std::string mods;
    bool is_decoy;
    bool operator<(const EntryKey& o) const {
        return std::tie(seq, mods, is_decoy) < std::tie(o.seq, o.mods, o.is_decoy);
    }
};

}  // namespace

PrecursorIndex PrecursorIndex::build(std::vector<IndexEntry> entries) {
    std::map<EntryKey, IndexEntry> merged;
    for (auto& e : entries) {
        EntryKey key{e.peptide.residues, format_mods(e.peptide), e.is_decoy};
        auto it = merged.find(key);
        if (it == merged.end()) {
            e.neutral_mass = peptide_neutral_mass(e.peptide);
            merged.emplace(std::move(key), std::move(e));
        } else {
            auto& refs = it->second.protein_refs;
            for (auto& r : e.protein_refs)
                if (std::find(refs.begin(), refs.end(), r) == refs.end())
                    refs.push_back(r);
        }
    }
    PrecursorIndex idx;
    idx.entries_.reserve(merged.size());
    for (auto& [k, v] : merged) idx.entries_.push_back(std::move(v));
    std::stable_sort(idx.entries_.begin(), idx.entries_.end(),
                     [](const IndexEntry& a, const IndexEntry& b) {
                         return a.neutral_mass < b.neutral_mass;
                     });
    return idx;
}

std::vector<CandidatePeptide> PrecursorIndex::query_restricted(double query_mass,
                                                               double tol_ppm) const {
    std::vector<CandidatePeptide> out;
    const double tol_da = query_mass * tol_ppm * 1e-6;
    auto lo = std::lower_bound(entries_.begin(), entries_.end(), query_mass - tol_da,
                               [](const IndexEntry& e, double v) {
                                   return e.neutral_mass < v;
                               });
    for (auto it = lo; it != entries_.end() && it->neutral_mass <= query_mass + tol_da;
         ++it) {
        CandidatePeptide c;
        c.peptide = it->peptide;
        c.protein_refs = it->protein_refs;
        c.is_decoy = it->is_decoy;
        c.neutral_mass = it->neutral_mass;
        c.mass_error_ppm = (query_mass - it->neutral_mass) / query_mass * 1e6;
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<CandidatePeptide> PrecursorIndex::query_open(double query_mass, double tol_ppm,
                                                         const ModTable& mods) const {
    std::vector<CandidatePeptide> out = query_restricted(query_mass, tol_ppm);
    const double tol_da = query_mass * tol_ppm * 1e-6;
    for (const auto& rec : mods.records) {
        // ProteinN-term placement is unresolvable at the peptide level here.
        if (rec.position == ModPosition::ProteinNTerm) continue;
        const double target = query_mass - rec.delta_mass;
        auto lo = std::lower_bound(entries_.begin(), entries_.end(), target - tol_da,
                                   [](const IndexEntry& e, double v) {
                                       return e.neutral_mass < v;
                                   });
        for (auto it = lo; it != entries_.end() && it->neutral_mass <= target + tol_da;
             ++it) {
            std::vector<int> sites;
            const std::string& seq = it->peptide.residues;
            auto occupied = [&](int pos) {
                for (const auto& m : it->peptide.mods)
                    if (m.pos == pos) return true;
                return false;
            };
            if (rec.position == ModPosition::Anywhere) {
                for (int i = 0; i < static_cast<int>(seq.size()); ++i)
                    if (site_allowed(rec, seq, i) && !occupied(i)) sites.push_back(i);
            } else if (rec.position == ModPosition::AnyNTerm) {
                if (site_allowed(rec, seq, kModPosNTerm) && !occupied(kModPosNTerm))
                    sites.push_back(kModPosNTerm);
            } else if (rec.position == ModPosition::AnyCTerm) {
                if (site_allowed(rec, seq, kModPosCTerm) && !occupied(kModPosCTerm))
                    sites.push_back(kModPosCTerm);
            }
            for (int pos : sites) {
                CandidatePeptide c;
                c.peptide = it->peptide;
                c.peptide.mods.push_back({pos, rec});
                c.protein_refs = it->protein_refs;
                c.is_decoy = it->is_decoy;
                c.neutral_mass = it->neutral_mass + rec.delta_mass;
                c.mass_error_ppm = (query_mass - c.neutral_mass) / query_mass * 1e6;
                out.push_back(std::move(c));
            }
        }
    }
    return out;
}

PrecursorIndex build_index_from_fasta(const std::vector<ProteinEntry>& proteins,
                                      const DigestParams& digest_params,
                                      const ModTable& mods, bool fixed_cam,
                                      DecoyMode decoy_mode,
                                      const std::vector<std::string>& variable_mods,
                                      bool with_decoys) {
    std::vector<IndexEntry> entries;
    auto add_protein = [&](const ProteinEntry& prot, bool is_decoy) {
        for (auto& pep : digest(prot, digest_params)) {
            Peptide base = pep;
            if (fixed_cam) apply_fixed_carbamidomethyl(base, mods);
            entries.push_back({0.0, base, {prot.accession}, is_decoy});
            // One variable modification per peptide, enumerated over legal sites.
            for (const auto& name : variable_mods) {
                for (const auto& rec : mods.records) {
                    if (rec.name != name) continue;
                    if (rec.position == ModPosition::ProteinNTerm) continue;
                    std::vector<int> sites;
                    if (rec.position == ModPosition::Anywhere) {
                        for (int i = 0; i < static_cast<int>(base.residues.size()); ++i)
                            if (site_allowed(rec, base.residues, i)) sites.push_back(i);
                    } else if (rec.position == ModPosition::AnyNTerm) {
                        if (site_allowed(rec, base.residues, kModPosNTerm))
                            sites.push_back(kModPosNTerm);
                    } else if (rec.position == ModPosition::AnyCTerm) {
                        if (site_allowed(rec, base.residues, kModPosCTerm))
                            sites.push_back(kModPosCTerm);
                    }
                    for (int pos : sites) {
                        bool occupied = false;
                        for (const auto& m : base.mods)
                            if (m.pos == pos) occupied = true;
                        if (occupied) continue;
                        Peptide modded = base;
                        modded.mods.push_back({pos, rec});
                        entries.push_back({0.0, modded, {prot.accession}, is_decoy});
                    }
                }
            }
        }
    };
    for (const auto& prot : proteins) {
        add_protein(prot, false);
        if (with_decoys) add_protein(generate_decoy(prot, decoy_mode), true);
    }
    return PrecursorIndex::build(std::move(entries));
}

// ---- binary cache ----

namespace {

constexpr char kIndexMagic[8] = {'P', 'U', 'F', 'I', 'D', 'X', '1', '\0'};
constexpr std::uint32_t kIndexVersion = 1;

template <typename T>
void put(std::string& buf, T v) {
    char tmp[sizeof(T)];
    std::memcpy(tmp, &v, sizeof(T));
    buf.append(tmp, sizeof(T));
}

template <typename T>
T get(const std::string& buf, std::size_t& off) {
    if (off + sizeof(T) > buf.size()) throw std::runtime_error("index cache truncated");
    T v;
    std::memcpy(&v, buf.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

std::string serialize_entry_mods(const IndexEntry& e) {
    std::string out;
    for (const auto& m : e.peptide.mods) {
        if (!out.empty()) out += ';';
        std::ostringstream ss;
        ss << m.record.name << '|' << m.record.site << '|' << to_string(m.record.position)
           << '|' << m.record.delta_mass << '|' << m.record.token_id << '|' << m.pos;
        out += ss.str();
    }
    return out;
}

std::vector<PlacedMod> deserialize_entry_mods(const std::string& text) {
    std::vector<PlacedMod> out;
    if (text.empty()) return out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ';')) {
        std::vector<std::string> f;
        std::stringstream is(item);
        std::string tok;
        while (std::getline(is, tok, '|')) f.push_back(tok);
        if (f.size() != 6) throw std::runtime_error("index cache: bad mod record");
        PlacedMod m;
        m.record.name = f[0];
        m.record.site = f[1].empty() ? '*' : f[1][0];
        m.record.position = mod_position_from_string(f[2]);
        m.record.delta_mass = std::stod(f[3]);
        m.record.token_id = std::stoi(f[4]);
        m.pos = std::stoi(f[5]);
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace

void PrecursorIndex::save(const std::string& path) const {
    std::string strings;
    std::string records;
    auto intern = [&](const std::string& s) {
        std::uint32_t off = static_cast<std::uint32_t>(strings.size());
        strings += s;
        return std::pair<std::uint32_t, std::uint32_t>(off,
                                                       static_cast<std::uint32_t>(s.size()));
    };
    for (const auto& e : entries_) {
        put(records, e.neutral_mass);
        put(records, static_cast<std::uint8_t>(e.is_decoy ? 1 : 0));
        auto [so, sl] = intern(e.peptide.residues);
        put(records, so);
        put(records, sl);
        auto [mo, ml] = intern(serialize_entry_mods(e));
        put(records, mo);
        put(records, ml);
        std::string refs;
        for (const auto& r : e.protein_refs) {
            if (!refs.empty()) refs += ',';
            refs += r;
        }
        auto [ro, rl] = intern(refs);
        put(records, ro);
        put(records, rl);
    }
    std::string out;
    out.append(kIndexMagic, sizeof(kIndexMagic));
    put(out, kIndexVersion);
    put(out, static_cast<std::uint64_t>(entries_.size()));
    put(out, static_cast<std::uint64_t>(strings.size()));
    out += records;
    out += strings;
    write_file(path, out);
}

PrecursorIndex PrecursorIndex::load(const std::string& path) {
    std::string buf = read_file(path);
    std::size_t off = 0;
    if (buf.size() < sizeof(kIndexMagic) ||
        std::memcmp(buf.data(), kIndexMagic, sizeof(kIndexMagic)) != 0)
        throw std::runtime_error("not an index cache (bad magic): " + path);
    off = sizeof(kIndexMagic);
    auto version = get<std::uint32_t>(buf, off);
    if (version != kIndexVersion)
        throw std::runtime_error("unsupported index cache version");
    auto count = get<std::uint64_t>(buf, off);
    auto strsize = get<std::uint64_t>(buf, off);
    constexpr std::size_t kRecordSize = 8 + 1 + 6 * 4;
    std::size_t strings_off = off + count * kRecordSize;
    if (strings_off + strsize > buf.size())
        throw std::runtime_error("index cache truncated");
    auto str_at = [&](std::uint32_t o, std::uint32_t l) {
        if (strings_off + o + l > buf.size())
            throw std::runtime_error("index cache: bad string ref");
        return buf.substr(strings_off + o, l);
    };
    PrecursorIndex idx;
    idx.entries_.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        IndexEntry e;
        e.neutral_mass = get<double>(buf, off);
        e.is_decoy = get<std::uint8_t>(buf, off) != 0;
        auto so = get<std::uint32_t>(buf, off);
        auto sl = get<std::uint32_t>(buf, off);
        e.peptide.residues = str_at(so, sl);
        auto mo = get<std::uint32_t>(buf, off);
        auto ml = get<std::uint32_t>(buf, off);
        e.peptide.mods = deserialize_entry_mods(str_at(mo, ml));
        auto ro = get<std::uint32_t>(buf, off);
        auto rl = get<std::uint32_t>(buf, off);
        std::string refs = str_at(ro, rl);
        std::stringstream rs(refs);
        std::string r;
        while (std::getline(rs, r, ','))
            if (!r.empty()) e.protein_refs.push_back(r);
        idx.entries_.push_back(std::move(e));
    }
    return idx;
}

// ---- peak annotation ----

std::string to_string(IonLabel l) {
    switch (l) {
        case IonLabel::None: return "none";
        case IonLabel::B: return "b";
        case IonLabel::Y: return "y";
        case IonLabel::BH2O: return "b-H2O";
        case IonLabel::YH2O: return "y-H2O";
        case IonLabel::BNH3: return "b-NH3";
        case IonLabel::YNH3: return "y-NH3";
    }
    return "none";
}

IonLabel ion_label_of(const TheoreticalFragment& f) {
    if (f.series == IonSeries::B) {
        if (f.loss == NeutralLoss::None) return IonLabel::B;
        if (f.loss == NeutralLoss::H2O) return IonLabel::BH2O;
        return IonLabel::BNH3;
    }
    if (f.loss == NeutralLoss::None) return IonLabel::Y;
    if (f.loss == NeutralLoss::H2O) return IonLabel::YH2O;
    return IonLabel::YNH3;
}

std::vector<PeakAnnotation> annotate_peaks(const ProcessedSpectrum& s, const Peptide& p,
                                           double tol_ppm, FragmentFlags losses,
                                           int max_charge) {
    auto frags = generate_fragments(p, max_charge, losses);
    std::vector<PeakAnnotation> out(s.peaks.size());
    for (std::size_t i = 0; i < s.peaks.size(); ++i) {
        const double mz = s.peaks[i].mz;
        const TheoreticalFragment* best = nullptr;
        double best_err = 0.0;
        for (const auto& f : frags) {
            double err = std::abs(mz - f.mz) / f.mz * 1e6;
            if (err > tol_ppm) continue;
            bool better;
            if (!best) {
                better = true;
            } else if (err != best_err) {
                better = err < best_err;
            } else if (f.series != best->series) {
                better = f.series == IonSeries::B;
            } else {
                better = static_cast<int>(f.loss) < static_cast<int>(best->loss);
            }
            if (better) {
                best = &f;
                best_err = err;
            }
        }
        if (best) {
            out[i].label = ion_label_of(*best);
            out[i].aa_count = best->aa_count;
            out[i].matched_mz_error_ppm = (mz - best->mz) / best->mz * 1e6;
        }
    }
    return out;
}

double fragment_coverage(const ProcessedSpectrum& s, const Peptide& p, double tol_ppm) {
    const int len = static_cast<int>(p.residues.size());
    if (len < 2) return 0.0;
    auto frags = generate_fragments(p, 2, {true, true});
    std::set<int> witnessed;  // cleavage site i = between residue i and i+1, 1..L-1
    for (const auto& f : frags) {
        bool matched = false;
        for (const auto& pk : s.peaks) {
            if (std::abs(pk.mz - f.mz) / f.mz * 1e6 <= tol_ppm) {
                matched = true;
                break;
            }
        }
        if (!matched) continue;
        int site = f.series == IonSeries::B ? f.index : len - f.index;
        witnessed.insert(site);
    }
    return static_cast<double>(witnessed.size()) / (len - 1);
}

}  // namespace puf

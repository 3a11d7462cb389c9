#include "puf/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace puf {

using nn::Mat;
using nn::Ref;
using nn::Tape;

// ---- vocab ----

int Vocab::residue_token(char aa) {
    auto pos = kResidueAlphabet.find(aa);
    if (pos == std::string_view::npos)
        throw ModelError(std::string("residue not in vocab: ") + aa);
    return kResidueBase + static_cast<int>(pos);
}

Vocab Vocab::from_table(const ModTable& table) {
    Vocab v;
    v.mod_names.resize(static_cast<std::size_t>(table.token_count));
    for (const auto& r : table.records)
        v.mod_names[static_cast<std::size_t>(r.token_id)] = r.name;
    return v;
}

void ModelParams::check_vocab_covers(const ModTable& table) const {
    for (const auto& r : table.records) {
        if (r.token_id >= static_cast<int>(vocab.mod_names.size()) ||
            vocab.mod_names[static_cast<std::size_t>(r.token_id)] != r.name) {
            // Accept name present anywhere in the vocab (token ids may differ
            // between table loads only if the table changed).
            bool found = std::find(vocab.mod_names.begin(), vocab.mod_names.end(),
                                   r.name) != vocab.mod_names.end();
            if (!found)
                throw ModelError("model vocab missing modification token: " + r.name);
        }
    }
}

// ---- sinusoidal encodings ----

namespace {

constexpr double kTwoPi = 6.283185307179586;

void fill_mass_encoding(double mass, double* out, int d) {
    const int half = d / 2;
    const double lo = 1.0, hi = 20000.0;
    for (int i = 0; i < half; ++i) {
        double lambda = lo * std::pow(hi / lo, half > 1 ? static_cast<double>(i) / (half - 1) : 0.0);
        out[2 * i] = std::sin(kTwoPi * mass / lambda);
        out[2 * i + 1] = std::cos(kTwoPi * mass / lambda);
    }
}

Mat position_encoding(int len, int d) {
    Mat m(len, d);
    for (int p = 0; p < len; ++p)
        for (int i = 0; i < d / 2; ++i) {
            double w = std::pow(10000.0, -2.0 * i / d);
            m.at(p, 2 * i) = std::sin(p * w);
            m.at(p, 2 * i + 1) = std::cos(p * w);
        }
    return m;
}

double mod_delta_floor(const ModTable& t) {
    double lo = 0.0;
    for (const auto& r : t.records) lo = std::min(lo, r.delta_mass);
    return lo;
}
double mod_delta_ceil(const ModTable& t) {
    double hi = 0.0;
    for (const auto& r : t.records) hi = std::max(hi, r.delta_mass);
    return hi;
}

}  // namespace

// ---- parameter init ----

namespace {

struct Initializer {
    std::mt19937_64 rng;
    std::normal_distribution<double> dist{0.0, 0.02};
    std::map<std::string, Mat>& arrays;

    void randn(const std::string& name, int r, int c) {
        Mat m(r, c);
        for (auto& v : m.d) v = dist(rng);
        arrays.emplace(name, std::move(m));
    }
    void zeros(const std::string& name, int r, int c) { arrays.emplace(name, Mat(r, c)); }
    void ones(const std::string& name, int r, int c) {
        Mat m(r, c);
        for (auto& v : m.d) v = 1.0;
        arrays.emplace(name, std::move(m));
    }
    void attn(const std::string& prefix, int d) {
        randn(prefix + ".wq", d, d);
        randn(prefix + ".wk", d, d);
        randn(prefix + ".wv", d, d);
        randn(prefix + ".wo", d, d);
    }
    void ln(const std::string& prefix, int d) {
        ones(prefix + ".g", 1, d);
        zeros(prefix + ".b", 1, d);
    }
    void ffn(const std::string& prefix, int d) {
        randn(prefix + ".w1", d, 4 * d);
        zeros(prefix + ".b1", 1, 4 * d);
        randn(prefix + ".w2", 4 * d, d);
        zeros(prefix + ".b2", 1, d);
    }
    void encoder_block(const std::string& prefix, int d) {
        ln(prefix + ".ln1", d);
        attn(prefix + ".attn", d);
        ln(prefix + ".ln2", d);
        ffn(prefix + ".ffn", d);
    }
    void decoder_block(const std::string& prefix, int d) {
        ln(prefix + ".ln1", d);
        attn(prefix + ".self", d);
        ln(prefix + ".ln2", d);
        attn(prefix + ".cross", d);
        ln(prefix + ".ln3", d);
        ffn(prefix + ".ffn", d);
    }
};

}  // namespace

ModelParams ModelParams::init(const Hyper& hp, const Vocab& vocab) {
    ModelParams p;
    p.hp = hp;
    p.vocab = vocab;
    Initializer init{std::mt19937_64(hp.seed),
                     std::normal_distribution<double>(0.0, 0.02), p.arrays};
    const int d = hp.d_model;

    init.randn("tok_embed", vocab.size(), d);
    init.randn("charge_embed", 9, d);
    init.randn("spec_int_w", 1, d);
    init.zeros("spec_in_bias", 1, d);
    init.zeros("spec_prec_bias", 1, d);
    for (int l = 0; l < hp.n_layers; ++l) {
        init.encoder_block("spec.l" + std::to_string(l), d);
        init.encoder_block("pep.l" + std::to_string(l), d);
        init.decoder_block("dec.l" + std::to_string(l), d);
    }
    init.randn("head_aa.w", d, hp.L_max + 1);
    init.zeros("head_aa.b", 1, hp.L_max + 1);
    init.randn("head_ion.w", d, kIonLabelCount);
    init.zeros("head_ion.b", 1, kIonLabelCount);
    init.randn("head_len.w", d, hp.L_max);
    init.zeros("head_len.b", 1, hp.L_max);
    init.zeros("head_spec.w", d, 6);
    init.zeros("head_spec.b", 1, 6);
    init.ln("joint.ln1", d);
    init.attn("joint.cross", d);
    init.ln("joint.ln2", d);
    init.ffn("joint.ffn", d);
    init.zeros("joint.out.w", d, 1);
    init.zeros("joint.out.b", 1, 1);
    init.ln("list.ln", d);
    init.attn("list.attn", d);
    init.zeros("list.out.w", d, 1);
    init.zeros("list.out.b", 1, 1);
    init.randn("dec.len_embed", hp.L_max + 1, d);
    init.randn("dec.out.w", d, vocab.size());
    init.zeros("dec.out.b", 1, vocab.size());
    return p;
}

// ---- model file ----

namespace {
constexpr char kModelMagic[8] = {'P', 'U', 'F', 'M', 'D', 'L', '1', '\0'};
constexpr std::uint32_t kModelVersion = 1;

template <typename T>
void bput(std::string& buf, T v) {
    char tmp[sizeof(T)];
    std::memcpy(tmp, &v, sizeof(T));
    buf.append(tmp, sizeof(T));
}
template <typename T>
T bget(const std::string& buf, std::size_t& off) {
    if (off + sizeof(T) > buf.size()) throw ModelError("model file truncated");
    T v;
    std::memcpy(&v, buf.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}
void bput_str(std::string& buf, const std::string& s) {
    bput(buf, static_cast<std::uint32_t>(s.size()));
    buf += s;
}
std::string bget_str(const std::string& buf, std::size_t& off) {
    auto n = bget<std::uint32_t>(buf, off);
    if (off + n > buf.size()) throw ModelError("model file truncated");
    std::string s = buf.substr(off, n);
    off += n;
    return s;
}
}  // namespace

void save_params(const ModelParams& p, const std::string& path) {
    std::string buf;
    buf.append(kModelMagic, sizeof(kModelMagic));
    bput(buf, kModelVersion);
    bput(buf, static_cast<std::int32_t>(p.hp.d_model));
    bput(buf, static_cast<std::int32_t>(p.hp.n_layers));
    bput(buf, static_cast<std::int32_t>(p.hp.n_heads));
    bput(buf, static_cast<std::int32_t>(p.hp.L_max));
    bput(buf, p.hp.temperature);
    bput(buf, p.hp.learning_rate);
    bput(buf, p.hp.momentum);
    bput(buf, p.hp.seed);
    bput(buf, static_cast<std::uint32_t>(p.vocab.mod_names.size()));
    for (const auto& n : p.vocab.mod_names) bput_str(buf, n);
    bput(buf, static_cast<std::uint32_t>(p.arrays.size()));
    for (const auto& [name, m] : p.arrays) {
        bput_str(buf, name);
        bput(buf, static_cast<std::int32_t>(m.rows));
        bput(buf, static_cast<std::int32_t>(m.cols));
        buf.append(reinterpret_cast<const char*>(m.d.data()), m.size() * sizeof(double));
    }
    write_file(path, buf);
}

ModelParams load_params(const std::string& path) {
    std::string buf = read_file(path);
    if (buf.size() < sizeof(kModelMagic) ||
        std::memcmp(buf.data(), kModelMagic, sizeof(kModelMagic)) != 0)
        throw ModelError("not a model file (bad magic): " + path);
    std::size_t off = sizeof(kModelMagic);
    if (bget<std::uint32_t>(buf, off) != kModelVersion)
        throw ModelError("unsupported model file version");
    ModelParams p;
    p.hp.d_model = bget<std::int32_t>(buf, off);
    p.hp.n_layers = bget<std::int32_t>(buf, off);
    p.hp.n_heads = bget<std::int32_t>(buf, off);
    p.hp.L_max = bget<std::int32_t>(buf, off);
    p.hp.temperature = bget<double>(buf, off);
    p.hp.learning_rate = bget<double>(buf, off);
    p.hp.momentum = bget<double>(buf, off);
    p.hp.seed = bget<std::uint64_t>(buf, off);
    auto nmods = bget<std::uint32_t>(buf, off);
    for (std::uint32_t i = 0; i < nmods; ++i) p.vocab.mod_names.push_back(bget_str(buf, off));
    auto narr = bget<std::uint32_t>(buf, off);
    for (std::uint32_t i = 0; i < narr; ++i) {
        std::string name = bget_str(buf, off);
        int rows = bget<std::int32_t>(buf, off);
        int cols = bget<std::int32_t>(buf, off);
        Mat m(rows, cols);
        std::size_t bytes = m.size() * sizeof(double);
        if (off + bytes > buf.size()) throw ModelError("model file truncated");
        std::memcpy(m.d.data(), buf.data() + off, bytes);
        off += bytes;
        p.arrays.emplace(std::move(name), std::move(m));
    }
    // Shape sanity vs declared hyperparams.
    auto it = p.arrays.find("tok_embed");
    if (it == p.arrays.end() || it->second.cols != p.hp.d_model ||
        it->second.rows != p.vocab.size())
        throw ModelError("model file: array shapes disagree with hyperparameters");
    return p;
}

// ---- runtime forward passes ----

Ref ModelRuntime::param(const std::string& name) {
    auto it = leaves_.find(name);
    if (it != leaves_.end()) return it->second;
    auto ait = params_.arrays.find(name);
    if (ait == params_.arrays.end()) throw ModelError("unknown parameter array: " + name);
    Ref leaf = tape_.leaf(ait->second, train_);
    leaves_.emplace(name, leaf);
    return leaf;
}

std::map<std::string, const Mat*> ModelRuntime::grads() const {
    std::map<std::string, const Mat*> out;
    for (const auto& [name, ref] : leaves_) out.emplace(name, &ref->grad);
    return out;
}

Ref ModelRuntime::self_attention(const std::string& prefix, Ref x, bool causal) {
    const int d = hp().d_model, nh = hp().n_heads, dh = d / nh;
    Ref q = tape_.matmul(x, param(prefix + ".wq"));
    Ref k = tape_.matmul(x, param(prefix + ".wk"));
    Ref v = tape_.matmul(x, param(prefix + ".wv"));
    const int T = x->val.rows;
    std::vector<Ref> heads;
    Ref mask = nullptr;
    if (causal) {
        Mat m(T, T);
        for (int i = 0; i < T; ++i)
            for (int j = i + 1; j < T; ++j) m.at(i, j) = -1e9;
        mask = tape_.constant(std::move(m));
    }
    for (int h = 0; h < nh; ++h) {
        Ref qh = tape_.col_range(q, h * dh, dh);
        Ref kh = tape_.col_range(k, h * dh, dh);
        Ref vh = tape_.col_range(v, h * dh, dh);
        Ref s = tape_.scale(tape_.matmul(qh, tape_.transpose(kh)), 1.0 / std::sqrt(dh));
        if (mask) s = tape_.add(s, mask);
        heads.push_back(tape_.matmul(tape_.softmax_rows(s), vh));
    }
    return tape_.matmul(tape_.concat_cols(heads), param(prefix + ".wo"));
}

Ref ModelRuntime::cross_attention(const std::string& prefix, Ref q_rows, Ref kv_rows) {
    const int d = hp().d_model, nh = hp().n_heads, dh = d / nh;
    Ref q = tape_.matmul(q_rows, param(prefix + ".wq"));
    Ref k = tape_.matmul(kv_rows, param(prefix + ".wk"));
    Ref v = tape_.matmul(kv_rows, param(prefix + ".wv"));
    std::vector<Ref> heads;
    for (int h = 0; h < nh; ++h) {
        Ref qh = tape_.col_range(q, h * dh, dh);
        Ref kh = tape_.col_range(k, h * dh, dh);
        Ref vh = tape_.col_range(v, h * dh, dh);
        Ref s = tape_.scale(tape_.matmul(qh, tape_.transpose(kh)), 1.0 / std::sqrt(dh));
        heads.push_back(tape_.matmul(tape_.softmax_rows(s), vh));
    }
    return tape_.matmul(tape_.concat_cols(heads), param(prefix + ".wo"));
}

Ref ModelRuntime::ffn(const std::string& prefix, Ref x) {
    Ref h = tape_.add_rowvec(tape_.matmul(x, param(prefix + ".w1")), param(prefix + ".b1"));
    h = tape_.relu(h);
    return tape_.add_rowvec(tape_.matmul(h, param(prefix + ".w2")), param(prefix + ".b2"));
}

Ref ModelRuntime::encoder_stack(const std::string& prefix, Ref x) {
    for (int l = 0; l < hp().n_layers; ++l) {
        std::string p = prefix + ".l" + std::to_string(l);
        Ref h = tape_.layer_norm_rows(x, param(p + ".ln1.g"), param(p + ".ln1.b"));
        x = tape_.add(x, self_attention(p + ".attn", h, false));
        Ref h2 = tape_.layer_norm_rows(x, param(p + ".ln2.g"), param(p + ".ln2.b"));
        x = tape_.add(x, ffn(p + ".ffn", h2));
    }
    return x;
}

SpectrumRepr ModelRuntime::embed_spectrum(const ProcessedSpectrum& s) {
    const int n = static_cast<int>(s.peaks.size());
    if (n == 0) throw ModelError("cannot embed a spectrum with zero peaks");
    const int d = hp().d_model;
    Mat enc(n, d);
    Mat inten(n, 1);
    for (int i = 0; i < n; ++i) {
        fill_mass_encoding(s.peaks[static_cast<std::size_t>(i)].mz,
                           enc.d.data() + static_cast<std::size_t>(i) * d, d);
        inten.at(i, 0) = s.peaks[static_cast<std::size_t>(i)].intensity;
    }
    Ref rows = tape_.add(tape_.constant(std::move(enc)),
                         tape_.matmul(tape_.constant(std::move(inten)), param("spec_int_w")));
    rows = tape_.add_rowvec(rows, param("spec_in_bias"));

    Mat prec(1, d);
    fill_mass_encoding(s.precursor_neutral_mass, prec.d.data(), d);
    int z = std::clamp(s.charge, 1, 8);
    Ref prec_row = tape_.add(tape_.constant(std::move(prec)),
                             tape_.gather_rows(param("charge_embed"), {z}));
    prec_row = tape_.add(prec_row, param("spec_prec_bias"));

    Ref x = tape_.concat_rows({rows, prec_row});
    x = encoder_stack("spec", x);

    SpectrumRepr r;
    r.all_rows = x;
    r.per_peak = tape_.row_range(x, 0, n);
    r.pooled = tape_.mean_rows(r.per_peak);
    r.n_peaks = n;
    return r;
}

PeptideRepr ModelRuntime::embed_peptide(const Peptide& p) {
    const int L = static_cast<int>(p.residues.size());
    if (L > hp().L_max) throw ModelError("peptide exceeds L_max");
    const int d = hp().d_model;
    std::vector<int> tokens;
    tokens.push_back(Vocab::kBos);
    for (char c : p.residues) tokens.push_back(Vocab::residue_token(c));
    tokens.push_back(Vocab::kEos);
    Ref x = tape_.gather_rows(param("tok_embed"), tokens);
    x = tape_.add(x, tape_.constant(position_encoding(L + 2, d)));

    // Prefix/suffix cumulative-mass encodings (half the feature width each)
    // put peptide tokens in the same sinusoidal mass space as the peak rows,
    // so cross-attention can match tokens against b/y fragment masses.
    {
        std::vector<double> site(static_cast<std::size_t>(L), 0.0);
        for (int i = 0; i < L; ++i)
            site[static_cast<std::size_t>(i)] = residue_mass(p.residues[static_cast<std::size_t>(i)]);
        for (const auto& m : p.mods) {
            int idx = m.pos == kModPosNTerm ? 0 : (m.pos == kModPosCTerm ? L - 1 : m.pos);
            if (idx >= 0 && idx < L) site[static_cast<std::size_t>(idx)] += m.record.delta_mass;
        }
        Mat enc(L + 2, d);
        double prefix = 0.0, total = 0.0;
        for (double v : site) total += v;
        for (int row = 0; row < L + 2; ++row) {
            if (row >= 1 && row <= L) prefix += site[static_cast<std::size_t>(row - 1)];
            fill_mass_encoding(prefix, enc.d.data() + static_cast<std::size_t>(row) * d, d / 2);
            fill_mass_encoding(total - prefix,
                               enc.d.data() + static_cast<std::size_t>(row) * d + d / 2, d - d / 2);
        }
        x = tape_.add(x, tape_.constant(std::move(enc)));
    }

    if (!p.mods.empty()) {
        // Additive mod-token embeddings via a constant scatter matrix.
        std::vector<int> mod_tokens;
        Mat scatter(L + 2, static_cast<int>(p.mods.size()));
        for (std::size_t i = 0; i < p.mods.size(); ++i) {
            const auto& m = p.mods[i];
            int tok = params_.vocab.mod_token(m.record.token_id);
            if (tok >= params_.vocab.size())
                throw ModelError("mod token out of vocab: " + m.record.name);
            mod_tokens.push_back(tok);
            int row = m.pos == kModPosNTerm ? 1 : (m.pos == kModPosCTerm ? L : m.pos + 1);
            scatter.at(row, static_cast<int>(i)) = 1.0;
        }
        Ref mod_rows = tape_.gather_rows(param("tok_embed"), mod_tokens);
        x = tape_.add(x, tape_.matmul(tape_.constant(std::move(scatter)), mod_rows));
    }
    x = encoder_stack("pep", x);
    PeptideRepr r;
    r.per_token = x;
    r.pooled = tape_.row_range(x, 0, 1);
    r.length = L;
    return r;
}

SpectrumHeadLogits ModelRuntime::spectrum_heads(const SpectrumRepr& r) {
    SpectrumHeadLogits h;
    h.aa_count = tape_.add_rowvec(tape_.matmul(r.per_peak, param("head_aa.w")),
                                  param("head_aa.b"));
    h.ion_type = tape_.add_rowvec(tape_.matmul(r.per_peak, param("head_ion.w")),
                                  param("head_ion.b"));
    h.length = tape_.add_rowvec(tape_.matmul(r.pooled, param("head_len.w")),
                                param("head_len.b"));
    return h;
}

Ref ModelRuntime::predict_spectrum(const PeptideRepr& r) {
    const int L = r.length;
    if (L < 2) throw ModelError("predict_spectrum needs length >= 2");
    Ref left = tape_.row_range(r.per_token, 1, L - 1);
    Ref right = tape_.row_range(r.per_token, 2, L - 1);
    Ref site = tape_.add(left, right);
    Ref logits = tape_.add_rowvec(tape_.matmul(site, param("head_spec.w")),
                                  param("head_spec.b"));
    return tape_.l2_normalize_flat(tape_.softplus(logits));
}

Ref ModelRuntime::joint_fused(const SpectrumRepr& rs, const PeptideRepr& rp) {
    Ref h = tape_.layer_norm_rows(rp.per_token, param("joint.ln1.g"), param("joint.ln1.b"));
    Ref x = tape_.add(rp.per_token, cross_attention("joint.cross", h, rs.all_rows));
    Ref h2 = tape_.layer_norm_rows(x, param("joint.ln2.g"), param("joint.ln2.b"));
    x = tape_.add(x, ffn("joint.ffn", h2));
    return tape_.mean_rows(x);
}

Ref ModelRuntime::joint_score_node(Ref fused) {
    return tape_.add(tape_.matmul(fused, param("joint.out.w")), param("joint.out.b"));
}

Ref ModelRuntime::listwise_logits(const std::vector<Ref>& fused_states) {
    Ref x = tape_.concat_rows(fused_states);
    Ref h = tape_.layer_norm_rows(x, param("list.ln.g"), param("list.ln.b"));
    x = tape_.add(x, self_attention("list.attn", h, false));
    Ref logits = tape_.add_rowvec(tape_.matmul(x, param("list.out.w")), param("list.out.b"));
    return tape_.transpose(logits);
}

Ref ModelRuntime::listwise_rank(const std::vector<Ref>& fused_states) {
    return tape_.softmax_rows(listwise_logits(fused_states));
}

Ref ModelRuntime::decoder_logits(const SpectrumRepr& rs, const std::vector<int>& tokens,
                                 const std::vector<int>& remaining_len,
                                 const std::vector<double>& prefix_mass) {
    const int T = static_cast<int>(tokens.size());
    const int d = hp().d_model;
    std::vector<int> rem_clamped(remaining_len.size());
    for (std::size_t i = 0; i < remaining_len.size(); ++i)
        rem_clamped[i] = std::clamp(remaining_len[i], 0, hp().L_max);
    Ref x = tape_.gather_rows(param("tok_embed"), tokens);
    x = tape_.add(x, tape_.gather_rows(param("dec.len_embed"), rem_clamped));
    Mat massenc(T, d);
    for (int i = 0; i < T; ++i)
        fill_mass_encoding(prefix_mass[static_cast<std::size_t>(i)],
                           massenc.d.data() + static_cast<std::size_t>(i) * d, d);
    x = tape_.add(x, tape_.constant(std::move(massenc)));
    for (int l = 0; l < hp().n_layers; ++l) {
        std::string p = "dec.l" + std::to_string(l);
        Ref h = tape_.layer_norm_rows(x, param(p + ".ln1.g"), param(p + ".ln1.b"));
        x = tape_.add(x, self_attention(p + ".self", h, true));
        Ref h2 = tape_.layer_norm_rows(x, param(p + ".ln2.g"), param(p + ".ln2.b"));
        x = tape_.add(x, cross_attention(p + ".cross", h2, rs.all_rows));
        Ref h3 = tape_.layer_norm_rows(x, param(p + ".ln3.g"), param(p + ".ln3.b"));
        x = tape_.add(x, ffn(p + ".ffn", h3));
    }
    return tape_.add_rowvec(tape_.matmul(x, param("dec.out.w")), param("dec.out.b"));
}

// ---- inference wrappers ----

double joint_score(const ModelParams& p, const ProcessedSpectrum& s, const Peptide& pep) {
    Tape tape;
    ModelRuntime rt(tape, p, false);
    auto rs = rt.embed_spectrum(s);
    auto rp = rt.embed_peptide(pep);
    return rt.joint_score_node(rt.joint_fused(rs, rp))->val.d[0];
}

std::vector<double> joint_scores(const ModelParams& p, const ProcessedSpectrum& s,
                                 const std::vector<Peptide>& peps) {
    Tape tape;
    ModelRuntime rt(tape, p, false);
    auto rs = rt.embed_spectrum(s);
    std::vector<double> out;
    out.reserve(peps.size());
    for (const auto& pep : peps)
        out.push_back(rt.joint_score_node(rt.joint_fused(rs, rt.embed_peptide(pep)))->val.d[0]);
    return out;
}

std::vector<double> length_distribution(const ModelParams& p, const ProcessedSpectrum& s) {
    Tape tape;
    ModelRuntime rt(tape, p, false);
    auto rs = rt.embed_spectrum(s);
    auto heads = rt.spectrum_heads(rs);
    Ref dist = tape.softmax_rows(heads.length);
    return dist->val.d;
}

int predict_length(const ModelParams& p, const ProcessedSpectrum& s) {
    auto dist = length_distribution(p, s);
    int best = 0;
    for (std::size_t i = 1; i < dist.size(); ++i)
        if (dist[i] > dist[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    return best + 1;
}

Mat experimental_ion_matrix(const ProcessedSpectrum& s, const Peptide& pep,
                            double tol_ppm) {
    const int L = static_cast<int>(pep.residues.size());
    Mat target(L - 1, 6);
    auto frags = generate_fragments(pep, 1, {true, true});
    for (const auto& f : frags) {
        double best = 0.0;
        for (const auto& pk : s.peaks)
            if (std::abs(pk.mz - f.mz) / f.mz * 1e6 <= tol_ppm)
                best = std::max(best, pk.intensity);
        if (best <= 0.0) continue;
        int col = 0;
        switch (ion_label_of(f)) {
            case IonLabel::B: col = 0; break;
            case IonLabel::Y: col = 1; break;
            case IonLabel::BH2O: col = 2; break;
            case IonLabel::YH2O: col = 3; break;
            case IonLabel::BNH3: col = 4; break;
            case IonLabel::YNH3: col = 5; break;
            default: continue;
        }
        int site = f.series == IonSeries::B ? f.index : L - f.index;  // 1..L-1
        target.at(site - 1, col) = std::max(target.at(site - 1, col), best);
    }
    double norm = 0.0;
    for (double v : target.d) norm += v * v;
    if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (auto& v : target.d) v /= norm;
    }
    return target;
}

double predicted_spectrum_cosine(const ModelParams& p, const ProcessedSpectrum& s,
                                 const Peptide& pep, double tol_ppm) {
    if (pep.residues.size() < 2) return 0.0;
    Tape tape;
    ModelRuntime rt(tape, p, false);
    auto rp = rt.embed_peptide(pep);
    Ref pred = rt.predict_spectrum(rp);
    Mat target = experimental_ion_matrix(s, pep, tol_ppm);
    Ref cos = tape.cosine_flat(pred, tape.constant(std::move(target)));
    return cos->val.d[0];
}

// ---- decoder stream ----

DecoderStream make_decoder_stream(const Peptide& p, const Vocab& vocab) {
    const int L = static_cast<int>(p.residues.size());
    std::vector<int> emit;
    std::vector<double> emit_mass_after;
    std::vector<int> emit_res_after;
    double mass = 0.0;
    int res_count = 0;
    auto mods_at = [&](int i) {
        std::vector<const PlacedMod*> out;
        for (const auto& m : p.mods) {
            int anchor = m.pos == kModPosNTerm ? 0 : (m.pos == kModPosCTerm ? L - 1 : m.pos);
            if (anchor == i) out.push_back(&m);
        }
        std::sort(out.begin(), out.end(), [](const PlacedMod* a, const PlacedMod* b) {
            return a->record.name < b->record.name;
        });
        return out;
    };
    for (int i = 0; i < L; ++i) {
        char aa = p.residues[static_cast<std::size_t>(i)];
        emit.push_back(Vocab::residue_token(aa));
        mass += residue_mass(aa);
        ++res_count;
        emit_mass_after.push_back(mass);
        emit_res_after.push_back(res_count);
        for (const auto* m : mods_at(i)) {
            emit.push_back(vocab.mod_token(m->record.token_id));
            mass += m->record.delta_mass;
            emit_mass_after.push_back(mass);
            emit_res_after.push_back(res_count);
        }
    }
    emit.push_back(Vocab::kEos);
    emit_mass_after.push_back(mass);
    emit_res_after.push_back(res_count);

    DecoderStream st;
    const int T = static_cast<int>(emit.size());
    st.tokens.resize(static_cast<std::size_t>(T));
    st.targets = emit;
    st.remaining_len.resize(static_cast<std::size_t>(T));
    st.prefix_mass.resize(static_cast<std::size_t>(T));
    st.tokens[0] = Vocab::kBos;
    st.remaining_len[0] = L;
    st.prefix_mass[0] = 0.0;
    for (int i = 1; i < T; ++i) {
        st.tokens[static_cast<std::size_t>(i)] = emit[static_cast<std::size_t>(i - 1)];
        st.remaining_len[static_cast<std::size_t>(i)] =
            L - emit_res_after[static_cast<std::size_t>(i - 1)];
        st.prefix_mass[static_cast<std::size_t>(i)] =
            emit_mass_after[static_cast<std::size_t>(i - 1)];
    }
    return st;
}

// ---- incremental beam-search decoder ----

namespace {

// Inference-only decoder state with per-layer KV caches. Mirrors
// ModelRuntime::decoder_logits step by step; the two paths are checked
// against each other in tests.
struct DecoderEngine {
    const ModelParams& p;
    Mat spec_rows;  // encoder output incl. precursor row
    std::vector<Mat> cross_k, cross_v;

    explicit DecoderEngine(const ModelParams& params, const ProcessedSpectrum& s)
        : p(params) {
        Tape tape;
        ModelRuntime rt(tape, p, false);
        spec_rows = rt.embed_spectrum(s).all_rows->val;
        for (int l = 0; l < p.hp.n_layers; ++l) {
            std::string pre = "dec.l" + std::to_string(l) + ".cross";
            cross_k.push_back(mm(spec_rows, p.arrays.at(pre + ".wk")));
            cross_v.push_back(mm(spec_rows, p.arrays.at(pre + ".wv")));
        }
    }

    struct Cache {
        std::vector<Mat> self_k, self_v;  // per layer, t x d
    };

    Cache make_cache() const {
        Cache c;
        c.self_k.assign(static_cast<std::size_t>(p.hp.n_layers), Mat(0, p.hp.d_model));
        c.self_v = c.self_k;
        return c;
    }

    static void layer_norm_vec(const Mat& g, const Mat& b, const std::vector<double>& x,
                               std::vector<double>& out) {
        const int d = static_cast<int>(x.size());
        double mu = 0.0;
        for (double v : x) mu += v;
        mu /= d;
        double var = 0.0;
        for (double v : x) var += (v - mu) * (v - mu);
        var /= d;
        double sd = std::sqrt(var + 1e-5);
        out.resize(x.size());
        for (int j = 0; j < d; ++j)
            out[static_cast<std::size_t>(j)] =
                (x[static_cast<std::size_t>(j)] - mu) / sd * g.d[static_cast<std::size_t>(j)] +
                b.d[static_cast<std::size_t>(j)];
    }

    static std::vector<double> vecmat(const std::vector<double>& v, const Mat& m) {
        std::vector<double> out(static_cast<std::size_t>(m.cols), 0.0);
        for (int k = 0; k < m.rows; ++k) {
            double vv = v[static_cast<std::size_t>(k)];
            if (vv == 0.0) continue;
            const double* row = m.d.data() + static_cast<std::size_t>(k) * m.cols;
            for (int j = 0; j < m.cols; ++j) out[static_cast<std::size_t>(j)] += vv * row[j];
        }
        return out;
    }

    // Multi-head attention of a single query vector over cached keys/values.
    std::vector<double> attend(const std::vector<double>& q, const Mat& K, const Mat& V,
                               const Mat& wo) const {
        const int d = p.hp.d_model, nh = p.hp.n_heads, dh = d / nh;
        const int T = K.rows;
        std::vector<double> ctx(static_cast<std::size_t>(d), 0.0);
        std::vector<double> scores(static_cast<std::size_t>(T));
        for (int h = 0; h < nh; ++h) {
            const int c0 = h * dh;
            double mx = -1e300;
            for (int t = 0; t < T; ++t) {
                double s = 0.0;
                for (int j = 0; j < dh; ++j)
                    s += q[static_cast<std::size_t>(c0 + j)] * K.at(t, c0 + j);
                s /= std::sqrt(dh);
                scores[static_cast<std::size_t>(t)] = s;
                mx = std::max(mx, s);
            }
            double sum = 0.0;
            for (int t = 0; t < T; ++t) {
                scores[static_cast<std::size_t>(t)] =
                    std::exp(scores[static_cast<std::size_t>(t)] - mx);
                sum += scores[static_cast<std::size_t>(t)];
            }
            for (int t = 0; t < T; ++t) {
                double w = scores[static_cast<std::size_t>(t)] / sum;
                for (int j = 0; j < dh; ++j)
                    ctx[static_cast<std::size_t>(c0 + j)] += w * V.at(t, c0 + j);
            }
        }
        return vecmat(ctx, wo);
    }

    /// Feed one token; returns logits over the vocab for the next token.
    std::vector<double> step(Cache& cache, int token, int remaining,
                             double prefix_mass) const {
        const int d = p.hp.d_model;
        const auto& tok = p.arrays.at("tok_embed");
        const auto& lenemb = p.arrays.at("dec.len_embed");
        int rem = std::clamp(remaining, 0, p.hp.L_max);
        std::vector<double> x(static_cast<std::size_t>(d));
        std::vector<double> massenc(static_cast<std::size_t>(d));
        fill_mass_encoding(prefix_mass, massenc.data(), d);
        for (int j = 0; j < d; ++j)
            x[static_cast<std::size_t>(j)] = tok.at(token, j) + lenemb.at(rem, j) +
                                             massenc[static_cast<std::size_t>(j)];
        std::vector<double> h;
        for (int l = 0; l < p.hp.n_layers; ++l) {
            std::string pre = "dec.l" + std::to_string(l);
            // self-attention over cached prefix + this position
            layer_norm_vec(p.arrays.at(pre + ".ln1.g"), p.arrays.at(pre + ".ln1.b"), x, h);
            auto q = vecmat(h, p.arrays.at(pre + ".self.wq"));
            auto k = vecmat(h, p.arrays.at(pre + ".self.wk"));
            auto v = vecmat(h, p.arrays.at(pre + ".self.wv"));
            Mat& K = cache.self_k[static_cast<std::size_t>(l)];
            Mat& V = cache.self_v[static_cast<std::size_t>(l)];
            K.d.insert(K.d.end(), k.begin(), k.end());
            K.rows += 1;
            K.cols = d;
            V.d.insert(V.d.end(), v.begin(), v.end());
            V.rows += 1;
            V.cols = d;
            auto att = attend(q, K, V, p.arrays.at(pre + ".self.wo"));
            for (int j = 0; j < d; ++j) x[static_cast<std::size_t>(j)] += att[static_cast<std::size_t>(j)];
            // cross-attention over spectrum rows
            layer_norm_vec(p.arrays.at(pre + ".ln2.g"), p.arrays.at(pre + ".ln2.b"), x, h);
            auto qc = vecmat(h, p.arrays.at(pre + ".cross.wq"));
            auto attc = attend(qc, cross_k[static_cast<std::size_t>(l)],
                               cross_v[static_cast<std::size_t>(l)],
                               p.arrays.at(pre + ".cross.wo"));
            for (int j = 0; j < d; ++j) x[static_cast<std::size_t>(j)] += attc[static_cast<std::size_t>(j)];
            // ffn
            layer_norm_vec(p.arrays.at(pre + ".ln3.g"), p.arrays.at(pre + ".ln3.b"), x, h);
            auto h1 = vecmat(h, p.arrays.at(pre + ".ffn.w1"));
            const auto& b1 = p.arrays.at(pre + ".ffn.b1");
            for (std::size_t j = 0; j < h1.size(); ++j) {
                h1[j] += b1.d[j];
                if (h1[j] < 0.0) h1[j] = 0.0;
            }
            auto h2 = vecmat(h1, p.arrays.at(pre + ".ffn.w2"));
            const auto& b2 = p.arrays.at(pre + ".ffn.b2");
            for (int j = 0; j < d; ++j)
                x[static_cast<std::size_t>(j)] += h2[static_cast<std::size_t>(j)] + b2.d[static_cast<std::size_t>(j)];
        }
        auto logits = vecmat(x, p.arrays.at("dec.out.w"));
        const auto& ob = p.arrays.at("dec.out.b");
        for (std::size_t j = 0; j < logits.size(); ++j) logits[j] += ob.d[j];
        return logits;
    }
};

struct BeamState {
    DecoderEngine::Cache cache;
    std::string residues;
    std::vector<PlacedMod> mods;
    double mass = 0.0;  // residues + mods, no water
    double log_prob = 0.0;
    int last_token = Vocab::kBos;
    bool last_is_unmodified_residue = false;
    std::vector<double> next_logprobs;  // filled each step
};

void log_softmax_inplace(std::vector<double>& v) {
    double mx = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v) sum += std::exp(x - mx);
    double lse = std::log(sum) + mx;
    for (double& x : v) x -= lse;
}

}  // namespace

std::vector<double> decoder_incremental_logits(const ModelParams& p,
                                               const ProcessedSpectrum& s,
                                               const std::vector<int>& tokens,
                                               const std::vector<int>& remaining_len,
                                               const std::vector<double>& prefix_mass) {
    DecoderEngine engine(p, s);
    auto cache = engine.make_cache();
    std::vector<double> logits;
    for (std::size_t i = 0; i < tokens.size(); ++i)
        logits = engine.step(cache, tokens[i], remaining_len[i], prefix_mass[i]);
    return logits;
}

std::vector<DecodedPeptide> pla_decode(const ModelParams& p, const ProcessedSpectrum& s,
                                       int target_length, double precursor_neutral_mass,
                                       int beam, const ModTable& mods, double tol_ppm) {
    if (target_length < 1 || target_length > p.hp.L_max)
        throw ModelError("target_length outside [1, L_max]");
    p.check_vocab_covers(mods);
    DecoderEngine engine(p, s);
    const double budget = precursor_neutral_mass - kWaterMass;
    const double tol_da = precursor_neutral_mass * tol_ppm * 1e-6;
    const double min_step = residue_mass('G');
    const double max_step = residue_mass('W');
    const double mod_lo = std::min(0.0, mod_delta_floor(mods));
    const double mod_hi = std::max(0.0, mod_delta_ceil(mods));
    const ModificationRecord* cam = mods.find_by_name("Carbamidomethyl");

    auto feasible = [&](double mass, int residues_left) {
        double deficit = budget - mass;
        double lo = residues_left * min_step + mod_lo - tol_da;
        double hi = residues_left * max_step + mod_hi + tol_da;
        return deficit >= lo && deficit <= hi;
    };

    std::vector<BeamState> active;
    {
        BeamState init;
        init.cache = engine.make_cache();
        active.push_back(std::move(init));
    }
    std::vector<DecodedPeptide> done;
    const int max_steps = 2 * target_length + 6;

    for (int step = 0; step < max_steps && !active.empty(); ++step) {
        // advance every active state by one decoder step
        for (auto& st : active) {
            int remaining = target_length - static_cast<int>(st.residues.size());
            st.next_logprobs = engine.step(st.cache, st.last_token, remaining, st.mass);
            log_softmax_inplace(st.next_logprobs);
        }
        struct Expansion {
            std::size_t state;
            int token;
            double log_prob;
        };
        std::vector<Expansion> exps;
        for (std::size_t si = 0; si < active.size(); ++si) {
            auto& st = active[si];
            const int emitted = static_cast<int>(st.residues.size());
            const int remaining = target_length - emitted;
            // residue tokens
            if (remaining > 0) {
                for (int ri = 0; ri < 20; ++ri) {
                    char aa = kResidueAlphabet[static_cast<std::size_t>(ri)];
                    double dm = residue_mass(aa);
                    if (aa == 'C' && cam) dm += cam->delta_mass;
                    if (!feasible(st.mass + dm, remaining - 1)) continue;
                    int tok = Vocab::kResidueBase + ri;
                    exps.push_back({si, tok,
                                    st.log_prob +
                                        st.next_logprobs[static_cast<std::size_t>(tok)]});
                }
            }
            // mod tokens attach to the preceding residue
            if (st.last_is_unmodified_residue && emitted > 0) {
                const int idx = emitted - 1;
                for (int ti = 0; ti < static_cast<int>(p.vocab.mod_names.size()); ++ti) {
                    const std::string& name =
                        p.vocab.mod_names[static_cast<std::size_t>(ti)];
                    if (name == "Carbamidomethyl") continue;  // fixed, applied on C
                    const ModificationRecord* rec = nullptr;
                    for (const auto& r : mods.records) {
                        if (r.name != name) continue;
                        bool ok = false;
                        if (r.position == ModPosition::Anywhere)
                            ok = site_allowed(r, st.residues, idx);
                        else if (r.position == ModPosition::AnyNTerm ||
                                 r.position == ModPosition::ProteinNTerm)
                            ok = idx == 0 && (r.site == '*' || r.site == st.residues[0]);
                        else if (r.position == ModPosition::AnyCTerm)
                            ok = remaining == 0 &&
                                 (r.site == '*' || r.site == st.residues.back());
                        if (ok) {
                            rec = &r;
                            break;
                        }
                    }
                    if (!rec) continue;
                    if (!feasible(st.mass + rec->delta_mass, remaining)) continue;
                    int tok = p.vocab.mod_token(ti);
                    exps.push_back({si, tok,
                                    st.log_prob +
                                        st.next_logprobs[static_cast<std::size_t>(tok)]});
                }
            }
            // EOS
            if (remaining == 0 &&
                std::abs(precursor_neutral_mass - (st.mass + kWaterMass)) <= tol_da) {
                exps.push_back({si, Vocab::kEos,
                                st.log_prob + st.next_logprobs[Vocab::kEos]});
            }
        }
        std::stable_sort(exps.begin(), exps.end(), [](const Expansion& a, const Expansion& b) {
            return a.log_prob > b.log_prob;
        });
        if (static_cast<int>(exps.size()) > beam) exps.resize(static_cast<std::size_t>(beam));

        std::vector<BeamState> next;
        for (const auto& e : exps) {
            const BeamState& src = active[e.state];
            if (e.token == Vocab::kEos) {
                Peptide pep;
                pep.residues = src.residues;
                pep.mods = src.mods;
                done.push_back({std::move(pep), e.log_prob});
                continue;
            }
            BeamState st = src;  // copies the KV cache
            st.log_prob = e.log_prob;
            st.last_token = e.token;
            if (e.token >= Vocab::kModBase) {
                int ti = e.token - Vocab::kModBase;
                const std::string& name = p.vocab.mod_names[static_cast<std::size_t>(ti)];
                const int idx = static_cast<int>(st.residues.size()) - 1;
                const ModificationRecord* rec = nullptr;
                for (const auto& r : mods.records) {
                    if (r.name != name) continue;
                    if (r.position == ModPosition::Anywhere && site_allowed(r, st.residues, idx))
                        rec = &r;
                    else if ((r.position == ModPosition::AnyNTerm ||
                              r.position == ModPosition::ProteinNTerm) &&
                             idx == 0)
                        rec = &r;
                    else if (r.position == ModPosition::AnyCTerm &&
                             static_cast<int>(st.residues.size()) == target_length)
                        rec = &r;
                    if (rec) break;
                }
                if (!rec) continue;
                int pos = rec->position == ModPosition::Anywhere
                              ? idx
                              : (rec->position == ModPosition::AnyCTerm ? kModPosCTerm
                                                                        : kModPosNTerm);
                st.mods.push_back({pos, *rec});
                st.mass += rec->delta_mass;
                st.last_is_unmodified_residue = false;
            } else {
                char aa = kResidueAlphabet[static_cast<std::size_t>(e.token - Vocab::kResidueBase)];
                st.residues += aa;
                st.mass += residue_mass(aa);
                st.last_is_unmodified_residue = true;
                if (aa == 'C' && cam) {
                    st.mods.push_back({static_cast<int>(st.residues.size()) - 1, *cam});
                    st.mass += cam->delta_mass;
                    st.last_is_unmodified_residue = false;  // position occupied
                }
            }
            next.push_back(std::move(st));
        }
        active = std::move(next);
    }
    std::stable_sort(done.begin(), done.end(), [](const DecodedPeptide& a, const DecodedPeptide& b) {
        return a.log_prob > b.log_prob;
    });
    if (static_cast<int>(done.size()) > beam) done.resize(static_cast<std::size_t>(beam));
    return done;
}

// ---- training ----

namespace {

struct ComponentAcc {
    std::vector<Ref> refs;
    double weight = 0.0;
};

}  // namespace

LossComponents Trainer::compute_gradients(const std::vector<TrainItem>& batch,
                                          std::map<std::string, nn::Mat>& out_grads) {
    if (batch.empty()) throw ModelError("train step on empty batch");
    Tape tape;
    ModelRuntime rt(tape, params_, true);
    const int B = static_cast<int>(batch.size());
    const auto& hp = params_.hp;

    std::vector<SpectrumRepr> specs;
    std::vector<PeptideRepr> pos_reprs;
    std::vector<Ref> pos_fused;
    specs.reserve(batch.size());
    for (const auto& item : batch) {
        specs.push_back(rt.embed_spectrum(item.spectrum));
        pos_reprs.push_back(rt.embed_peptide(item.positive));
    }

    std::vector<Ref> l_aa, l_ion, l_len, l_spec, l_point, l_list, l_dec;
    for (int i = 0; i < B; ++i) {
        const auto& item = batch[static_cast<std::size_t>(i)];
        const auto& sr = specs[static_cast<std::size_t>(i)];
        const auto& pr = pos_reprs[static_cast<std::size_t>(i)];
        auto heads = rt.spectrum_heads(sr);

        // (1) per-peak aa-count CE, (2) per-peak ion-type CE
        std::vector<int> aa_targets, ion_targets;
        for (const auto& ann : item.annotations) {
            aa_targets.push_back(std::clamp(ann.aa_count, 0, hp.L_max));
            ion_targets.push_back(static_cast<int>(ann.label));
        }
        if (static_cast<int>(aa_targets.size()) != sr.n_peaks)
            throw ModelError("annotation count does not match peak count");
        l_aa.push_back(tape.scale(tape.ce_rows(heads.aa_count, aa_targets),
                                  1.0 / sr.n_peaks));
        l_ion.push_back(tape.scale(tape.ce_rows(heads.ion_type, ion_targets),
                                   1.0 / sr.n_peaks));

        // (3) length CE
        int len_target = std::clamp(item.true_length, 1, hp.L_max) - 1;
        l_len.push_back(tape.ce_rows(heads.length, {len_target}));

        // (4) spectrum-prediction cosine loss
        if (item.positive.residues.size() >= 2) {
            Mat target = experimental_ion_matrix(item.spectrum, item.positive);
            bool nonzero = false;
            for (double v : target.d)
                if (v != 0.0) nonzero = true;
            if (nonzero) {
                Ref pred = rt.predict_spectrum(pr);
                Ref cos = tape.cosine_flat(pred, tape.constant(std::move(target)));
                l_spec.push_back(tape.sub(tape.scalar(1.0), cos));
            }
        }

        // (5) pointwise contrastive with in-spectrum + in-batch negatives
        Ref fused_pos = rt.joint_fused(sr, pr);
        pos_fused.push_back(fused_pos);
        std::vector<Ref> cand_fused{fused_pos};
        for (const auto& neg : item.negatives)
            cand_fused.push_back(rt.joint_fused(sr, rt.embed_peptide(neg)));
        std::vector<Ref> score_nodes;
        for (Ref f : cand_fused) score_nodes.push_back(rt.joint_score_node(f));
        for (int k = 0; k < B; ++k) {
            if (k == i) continue;
            score_nodes.push_back(rt.joint_score_node(
                rt.joint_fused(sr, pos_reprs[static_cast<std::size_t>(k)])));
        }
        if (score_nodes.size() > 1) {
            Ref logits = tape.scale(tape.transpose(tape.concat_rows(score_nodes)),
                                    1.0 / hp.temperature);
            l_point.push_back(tape.ce_rows(logits, {0}));
        }

        // (6) listwise CE over in-spectrum candidates (true peptide first)
        if (cand_fused.size() > 1)
            l_list.push_back(tape.ce_rows(rt.listwise_logits(cand_fused), {0}));

        // (7) decoder token CE (teacher forcing)
        auto stream = make_decoder_stream(item.positive, params_.vocab);
        Ref dec_logits = rt.decoder_logits(sr, stream.tokens, stream.remaining_len,
                                           stream.prefix_mass);
        l_dec.push_back(tape.scale(tape.ce_rows(dec_logits, stream.targets),
                                   1.0 / static_cast<double>(stream.targets.size())));
    }

    auto mean_of = [&](std::vector<Ref>& v) -> Ref {
        if (v.empty()) return tape.scalar(0.0);
        return tape.scale(tape.weighted_sum(v, std::vector<double>(v.size(), 1.0)),
                          1.0 / static_cast<double>(v.size()));
    };
    Ref c_aa = mean_of(l_aa), c_ion = mean_of(l_ion), c_len = mean_of(l_len);
    Ref c_spec = mean_of(l_spec), c_point = mean_of(l_point), c_list = mean_of(l_list);
    Ref c_dec = mean_of(l_dec);
    Ref total = tape.weighted_sum(
        {c_aa, c_ion, c_len, c_spec, c_point, c_list, c_dec},
        {weights_.aa_count, weights_.ion_type, weights_.length, weights_.spectrum_pred,
         weights_.pointwise, weights_.listwise, weights_.decoder});

    LossComponents lc;
    lc.aa_count = c_aa->val.d[0];
    lc.ion_type = c_ion->val.d[0];
    lc.length = c_len->val.d[0];
    lc.spectrum_pred = c_spec->val.d[0];
    lc.pointwise = c_point->val.d[0];
    lc.listwise = c_list->val.d[0];
    lc.decoder = c_dec->val.d[0];
    lc.total = total->val.d[0];
    const std::pair<const char*, double> comps[] = {
        {"aa_count", lc.aa_count},   {"ion_type", lc.ion_type}, {"length", lc.length},
        {"spectrum_pred", lc.spectrum_pred}, {"pointwise", lc.pointwise},
        {"listwise", lc.listwise},   {"decoder", lc.decoder}};
    for (const auto& [name, v] : comps)
        if (!std::isfinite(v))
            throw ModelError(std::string("non-finite loss component: ") + name);

    tape.backward(total);
    out_grads.clear();
    for (const auto& [name, grad] : rt.grads()) out_grads.emplace(name, *grad);
    return lc;
}

double Trainer::forward_loss(const std::vector<TrainItem>& batch) {
    std::map<std::string, Mat> grads;
    // forward values are computed along the way; reuse compute path but skip
    // update. The backward pass cost is acceptable for the FD oracle.
    return compute_gradients(batch, grads).total;
}

LossComponents Trainer::step(const std::vector<TrainItem>& batch) {
    std::map<std::string, Mat> grads;
    LossComponents lc = compute_gradients(batch, grads);
    for (auto& [name, g] : grads) {
        auto& w = params_.arrays.at(name);
        auto [it, inserted] = velocity_.try_emplace(name, Mat(w.rows, w.cols));
        Mat& v = it->second;
        for (std::size_t i = 0; i < w.size(); ++i) {
            v.d[i] = params_.hp.momentum * v.d[i] - params_.hp.learning_rate * g.d[i];
            w.d[i] += v.d[i];
        }
    }
    return lc;
}

}  // namespace puf

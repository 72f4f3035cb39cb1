#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "bcid/errors.hpp"
#include "bcid/features.hpp"
#include "bcid/linalg.hpp"
#include "bcid/rng.hpp"

namespace bcid {

// ---------------------------------------------------------------------------
// Input encoding: one-hot categories + z-scored continuous features.
// ---------------------------------------------------------------------------

struct EncodingSpec {
    std::vector<std::string> protocol_vocab;
    std::vector<std::string> service_vocab;
    std::vector<std::string> flag_vocab;
    std::array<double, 18> mean{};
    std::array<double, 18> stdev{}; // > 0; constant features standardize to 0

    static std::vector<std::string> default_protocols() {
        return {kProtocolNames.begin(), kProtocolNames.end()};
    }
    static std::vector<std::string> default_services() {
        return {kServiceNames.begin(), kServiceNames.end()};
    }
    static std::vector<std::string> default_flags() {
        return {kConnFlagNames.begin(), kConnFlagNames.end()};
    }

    std::size_t encoded_width() const {
        return protocol_vocab.size() + service_vocab.size() + flag_vocab.size() +
               kContinuousIdx.size();
    }

    bool operator==(const EncodingSpec&) const = default;
};

// Sufficient statistics for standardization; summable across nodes so the
// collaborative mode can agree on one encoding without pooling raw samples.
struct FeatureMoments {
    std::uint64_t count = 0;
    std::array<double, 18> sum{};
    std::array<double, 18> sum_sq{};

    static FeatureMoments of(std::span<const FeatureVector> data) {
        FeatureMoments m;
        m.count = data.size();
        for (const auto& fv : data)
            for (std::size_t i = 0; i < kContinuousIdx.size(); ++i) {
                const double x = fv.values[kContinuousIdx[i]];
                m.sum[i] += x;
                m.sum_sq[i] += x * x;
            }
        return m;
    }

    void merge(const FeatureMoments& o) {
        count += o.count;
        for (std::size_t i = 0; i < sum.size(); ++i) {
            sum[i] += o.sum[i];
            sum_sq[i] += o.sum_sq[i];
        }
    }
};

inline EncodingSpec encoding_from_moments(const FeatureMoments& m) {
    if (m.count == 0)
        throw EmptyDataset("cannot fit an encoding on zero samples");
    EncodingSpec spec;
    spec.protocol_vocab = EncodingSpec::default_protocols();
    spec.service_vocab = EncodingSpec::default_services();
    spec.flag_vocab = EncodingSpec::default_flags();
    const double n = static_cast<double>(m.count);
    for (std::size_t i = 0; i < 18; ++i) {
        spec.mean[i] = m.sum[i] / n;
        const double var = std::max(0.0, m.sum_sq[i] / n - spec.mean[i] * spec.mean[i]);
        const double sd = std::sqrt(var);
        spec.stdev[i] = sd > 1e-12 ? sd : 1.0;
    }
    return spec;
}

inline EncodingSpec fit_encoding(std::span<const FeatureVector> data) {
    return encoding_from_moments(FeatureMoments::of(data));
}

inline Vector encode(const FeatureVector& sample, const EncodingSpec& spec) {
    Vector v;
    v.reserve(spec.encoded_width());
    auto one_hot = [&](std::size_t code, const std::vector<std::string>& vocab,
                       const char* what) {
        if (code >= vocab.size())
            throw UnknownCategory(std::string(what) + " code " + std::to_string(code) +
                                  " outside vocabulary of " + std::to_string(vocab.size()));
        for (std::size_t i = 0; i < vocab.size(); ++i)
            v.push_back(i == code ? 1.0 : 0.0);
    };
    one_hot(static_cast<std::size_t>(sample.values[kProtocolIdx]), spec.protocol_vocab,
            "protocol");
    one_hot(static_cast<std::size_t>(sample.values[kServiceIdx]), spec.service_vocab, "service");
    one_hot(static_cast<std::size_t>(sample.values[kFlagIdx]), spec.flag_vocab, "flag");
    for (std::size_t i = 0; i < kContinuousIdx.size(); ++i)
        v.push_back((sample.values[kContinuousIdx[i]] - spec.mean[i]) / spec.stdev[i]);
    return v;
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

// Gaussian-visible RBM. w: M x N, b1/sigma over visible, b2 over hidden.
struct GrbmLayer {
    Matrix w;
    Vector b1;
    Vector b2;
    Vector sigma; // per-visible standard deviation, > 0

    std::size_t visible() const { return w.rows(); }
    std::size_t hidden() const { return w.cols(); }

    void check() const {
        if (b1.size() != w.rows() || sigma.size() != w.rows() || b2.size() != w.cols())
            throw DimensionMismatch("GRBM parameter shapes disagree");
        for (double s : sigma)
            if (!(s > 0.0))
                throw DimensionMismatch("GRBM sigma must be positive");
    }

    bool operator==(const GrbmLayer&) const = default;
};

// Binary-binary RBM.
struct RbmLayer {
    Matrix w;
    Vector b1;
    Vector b2;

    std::size_t visible() const { return w.rows(); }
    std::size_t hidden() const { return w.cols(); }

    void check() const {
        if (b1.size() != w.rows() || b2.size() != w.cols())
            throw DimensionMismatch("RBM parameter shapes disagree");
    }

    bool operator==(const RbmLayer&) const = default;
};

struct SoftmaxHead {
    Matrix w; // T x N_last
    Vector b; // T

    std::size_t classes() const { return w.rows(); }

    void check() const {
        if (b.size() != w.rows())
            throw DimensionMismatch("softmax head shapes disagree");
    }

    bool operator==(const SoftmaxHead&) const = default;
};

// ---------------------------------------------------------------------------
// Energies and exact marginals
// ---------------------------------------------------------------------------

inline double grbm_energy(const GrbmLayer& layer, const Vector& v, const Vector& h) {
    if (v.size() != layer.visible() || h.size() != layer.hidden())
        throw DimensionMismatch("grbm_energy: vector sizes do not match layer");
    double e = 0.0;
    for (std::size_t m = 0; m < v.size(); ++m) {
        const double d = v[m] - layer.b1[m];
        e += d * d / (2.0 * layer.sigma[m] * layer.sigma[m]);
    }
    for (std::size_t m = 0; m < v.size(); ++m) {
        const double vm = v[m] / layer.sigma[m];
        const double* wr = layer.w.row(m);
        for (std::size_t n = 0; n < h.size(); ++n)
            e -= wr[n] * h[n] * vm;
    }
    for (std::size_t n = 0; n < h.size(); ++n)
        e -= layer.b2[n] * h[n];
    return e;
}

inline double rbm_energy(const RbmLayer& layer, const Vector& v, const Vector& h) {
    if (v.size() != layer.visible() || h.size() != layer.hidden())
        throw DimensionMismatch("rbm_energy: vector sizes do not match layer");
    double e = 0.0;
    for (std::size_t m = 0; m < v.size(); ++m)
        e -= layer.b1[m] * v[m];
    for (std::size_t m = 0; m < v.size(); ++m) {
        if (v[m] == 0.0)
            continue;
        const double* wr = layer.w.row(m);
        for (std::size_t n = 0; n < h.size(); ++n)
            e -= wr[n] * v[m] * h[n];
    }
    for (std::size_t n = 0; n < h.size(); ++n)
        e -= layer.b2[n] * h[n];
    return e;
}

namespace detail {

inline Vector bits_to_vector(std::uint32_t bits, std::size_t n) {
    Vector v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = (bits >> i) & 1u ? 1.0 : 0.0;
    return v;
}

} // namespace detail

// Exact p(v) by enumeration of all binary states. Test-oracle machinery, not
// a training path; refuses layers beyond 20 total units.
inline double visible_marginal(const RbmLayer& layer, const Vector& v) {
    layer.check();
    const std::size_t m = layer.visible();
    const std::size_t n = layer.hidden();
    if (m + n > 20)
        throw TooLargeForEnumeration("visible_marginal needs M'+N' <= 20, got " +
                                     std::to_string(m + n));
    if (v.size() != m)
        throw DimensionMismatch("visible_marginal: v size");

    double numer = 0.0;
    for (std::uint32_t hb = 0; hb < (1u << n); ++hb)
        numer += std::exp(-rbm_energy(layer, v, detail::bits_to_vector(hb, n)));
    double denom = 0.0;
    for (std::uint32_t vb = 0; vb < (1u << m); ++vb) {
        const Vector vv = detail::bits_to_vector(vb, m);
        for (std::uint32_t hb = 0; hb < (1u << n); ++hb)
            denom += std::exp(-rbm_energy(layer, vv, detail::bits_to_vector(hb, n)));
    }
    return numer / denom;
}

// ---------------------------------------------------------------------------
// Conditionals
// ---------------------------------------------------------------------------

inline Vector grbm_hidden_probs(const GrbmLayer& layer, const Vector& v) {
    Vector scaled(v.size());
    for (std::size_t m = 0; m < v.size(); ++m)
        scaled[m] = v[m] / layer.sigma[m];
    Vector z = affine_transposed(layer.w, scaled, layer.b2);
    for (double& x : z)
        x = sigmoid(x);
    return z;
}

inline Vector grbm_visible_mean(const GrbmLayer& layer, const Vector& h) {
    Vector mean = affine(layer.w, h, Vector(layer.visible(), 0.0));
    for (std::size_t m = 0; m < mean.size(); ++m)
        mean[m] = layer.b1[m] + layer.sigma[m] * mean[m];
    return mean;
}

inline Vector rbm_hidden_probs(const RbmLayer& layer, const Vector& v) {
    Vector z = affine_transposed(layer.w, v, layer.b2);
    for (double& x : z)
        x = sigmoid(x);
    return z;
}

inline Vector rbm_visible_probs(const RbmLayer& layer, const Vector& h) {
    Vector z = affine(layer.w, h, layer.b1);
    for (double& x : z)
        x = sigmoid(x);
    return z;
}

// ---------------------------------------------------------------------------
// Contrastive divergence
// ---------------------------------------------------------------------------

// Gradient of one layer's parameters; sign convention is log-likelihood
// ascent everywhere in this project.
struct LayerGradient {
    Matrix dw;
    Vector db1;
    Vector db2;

    void add(const LayerGradient& o, double a = 1.0) {
        add_scaled(dw, o.dw, a);
        add_scaled(db1, o.db1, a);
        add_scaled(db2, o.db2, a);
    }

    void scale_by(double a) {
        scale(dw, a);
        scale(db1, a);
        scale(db2, a);
    }

    double sum_sq() const { return sum_squares(dw) + sum_squares(db1) + sum_squares(db2); }

    bool operator==(const LayerGradient&) const = default;
};

namespace detail {

inline Vector sample_bernoulli(const Vector& probs, std::mt19937_64& rng) {
    Vector s(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i)
        s[i] = bernoulli(rng, probs[i]) ? 1.0 : 0.0;
    return s;
}

} // namespace detail

// CD-k for the binary RBM. Data phase uses hidden probabilities; the chain
// samples both layers; the final hidden phase uses probabilities.
inline LayerGradient cd_gradient(const RbmLayer& layer, std::span<const Vector> batch,
                                 unsigned k_steps, std::mt19937_64& rng) {
    layer.check();
    if (batch.empty())
        throw EmptyBatch("cd_gradient: empty batch");
    if (k_steps < 1)
        throw InvalidConfig("cd_gradient: k_steps must be >= 1");

    LayerGradient g{Matrix(layer.visible(), layer.hidden()), Vector(layer.visible(), 0.0),
                    Vector(layer.hidden(), 0.0)};
    for (const Vector& v0 : batch) {
        if (v0.size() != layer.visible())
            throw DimensionMismatch("cd_gradient: sample width");
        Vector h_probs = rbm_hidden_probs(layer, v0);
        outer_add(g.dw, v0, h_probs);
        add_scaled(g.db1, v0, 1.0);
        add_scaled(g.db2, h_probs, 1.0);

        Vector v = v0;
        for (unsigned step = 0; step < k_steps; ++step) {
            const Vector h = detail::sample_bernoulli(h_probs, rng);
            v = detail::sample_bernoulli(rbm_visible_probs(layer, h), rng);
            h_probs = rbm_hidden_probs(layer, v);
        }
        outer_add(g.dw, v, h_probs, -1.0);
        add_scaled(g.db1, v, -1.0);
        add_scaled(g.db2, h_probs, -1.0);
    }
    g.scale_by(1.0 / static_cast<double>(batch.size()));
    return g;
}

// CD-k for the GRBM. Visible reconstructions are sampled from
// Normal(b1 + sigma .* (W h), sigma).
inline LayerGradient cd_gradient(const GrbmLayer& layer, std::span<const Vector> batch,
                                 unsigned k_steps, std::mt19937_64& rng) {
    layer.check();
    if (batch.empty())
        throw EmptyBatch("cd_gradient: empty batch");
    if (k_steps < 1)
        throw InvalidConfig("cd_gradient: k_steps must be >= 1");

    LayerGradient g{Matrix(layer.visible(), layer.hidden()), Vector(layer.visible(), 0.0),
                    Vector(layer.hidden(), 0.0)};
    const std::size_t M = layer.visible();

    auto accumulate = [&](const Vector& v, const Vector& h_probs, double sign) {
        Vector scaled(M);
        for (std::size_t m = 0; m < M; ++m)
            scaled[m] = v[m] / layer.sigma[m];
        outer_add(g.dw, scaled, h_probs, sign);
        for (std::size_t m = 0; m < M; ++m)
            g.db1[m] += sign * (v[m] - layer.b1[m]) / (layer.sigma[m] * layer.sigma[m]);
        add_scaled(g.db2, h_probs, sign);
    };

    for (const Vector& v0 : batch) {
        if (v0.size() != M)
            throw DimensionMismatch("cd_gradient: sample width");
        Vector h_probs = grbm_hidden_probs(layer, v0);
        accumulate(v0, h_probs, 1.0);

        Vector v = v0;
        for (unsigned step = 0; step < k_steps; ++step) {
            const Vector h = detail::sample_bernoulli(h_probs, rng);
            const Vector mean = grbm_visible_mean(layer, h);
            for (std::size_t m = 0; m < M; ++m)
                v[m] = normal(rng, mean[m], layer.sigma[m]);
            h_probs = grbm_hidden_probs(layer, v);
        }
        accumulate(v, h_probs, -1.0);
    }
    g.scale_by(1.0 / static_cast<double>(batch.size()));
    return g;
}

// Exact log-likelihood gradient: the model phase is the true expectation over
// all binary states instead of a Gibbs estimate. Oracle counterpart of CD.
inline LayerGradient cd_gradient_exact(const RbmLayer& layer, std::span<const Vector> batch) {
    layer.check();
    if (batch.empty())
        throw EmptyBatch("cd_gradient_exact: empty batch");
    const std::size_t M = layer.visible();
    const std::size_t N = layer.hidden();
    if (M + N > 20)
        throw TooLargeForEnumeration("cd_gradient_exact needs M'+N' <= 20");

    LayerGradient g{Matrix(M, N), Vector(M, 0.0), Vector(N, 0.0)};
    for (const Vector& v0 : batch) {
        const Vector h_probs = rbm_hidden_probs(layer, v0);
        outer_add(g.dw, v0, h_probs);
        add_scaled(g.db1, v0, 1.0);
        add_scaled(g.db2, h_probs, 1.0);
    }
    g.scale_by(1.0 / static_cast<double>(batch.size()));

    // model expectations <v h>, <v>, <h> under the joint distribution
    double z = 0.0;
    Matrix evh(M, N);
    Vector ev(M, 0.0), eh(N, 0.0);
    for (std::uint32_t vb = 0; vb < (1u << M); ++vb) {
        const Vector v = detail::bits_to_vector(vb, M);
        for (std::uint32_t hb = 0; hb < (1u << N); ++hb) {
            const Vector h = detail::bits_to_vector(hb, N);
            const double p = std::exp(-rbm_energy(layer, v, h));
            z += p;
            outer_add(evh, v, h, p);
            add_scaled(ev, v, p);
            add_scaled(eh, h, p);
        }
    }
    add_scaled(g.dw, evh, -1.0 / z);
    add_scaled(g.db1, ev, -1.0 / z);
    add_scaled(g.db2, eh, -1.0 / z);
    return g;
}

// ---------------------------------------------------------------------------
// The full model
// ---------------------------------------------------------------------------

struct DbnModel {
    GrbmLayer grbm;
    std::vector<RbmLayer> rbms;
    SoftmaxHead head;
    EncodingSpec encoding;

    std::size_t input_width() const { return grbm.visible(); }
    std::size_t last_hidden_width() const {
        return rbms.empty() ? grbm.hidden() : rbms.back().hidden();
    }

    void check() const {
        grbm.check();
        std::size_t prev = grbm.hidden();
        for (const auto& r : rbms) {
            r.check();
            if (r.visible() != prev)
                throw DimensionMismatch("RBM stack widths do not chain");
            prev = r.hidden();
        }
        head.check();
        if (head.w.cols() != prev)
            throw DimensionMismatch("softmax head width does not match last hidden layer");
    }

    // Loaded models must also agree with their own encoding.
    void check_encoding() const {
        check();
        if (encoding.encoded_width() != grbm.visible())
            throw EncodingMismatch("encoding width " + std::to_string(encoding.encoded_width()) +
                                   " does not match GRBM input " + std::to_string(grbm.visible()));
    }

    bool operator==(const DbnModel&) const = default;
};

// Uniform [-0.01, 0.01] weights from the run seed; zero biases; unit sigma.
inline DbnModel init_model(const EncodingSpec& spec, std::span<const std::size_t> hidden_sizes,
                           std::uint64_t seed, std::size_t classes = kClassCount) {
    if (hidden_sizes.empty())
        throw InvalidConfig("at least one hidden layer is required");
    auto rng = fork_rng(seed, "dbn.init");
    auto fill = [&](Matrix& m) {
        for (double& x : m.data())
            x = uniform_range(rng, -0.01, 0.01);
    };

    DbnModel model;
    model.encoding = spec;
    model.grbm.w = Matrix(spec.encoded_width(), hidden_sizes[0]);
    fill(model.grbm.w);
    model.grbm.b1 = Vector(spec.encoded_width(), 0.0);
    model.grbm.b2 = Vector(hidden_sizes[0], 0.0);
    model.grbm.sigma = Vector(spec.encoded_width(), 1.0);
    for (std::size_t i = 1; i < hidden_sizes.size(); ++i) {
        RbmLayer r;
        r.w = Matrix(hidden_sizes[i - 1], hidden_sizes[i]);
        fill(r.w);
        r.b1 = Vector(hidden_sizes[i - 1], 0.0);
        r.b2 = Vector(hidden_sizes[i], 0.0);
        model.rbms.push_back(std::move(r));
    }
    model.head.w = Matrix(classes, hidden_sizes.back());
    fill(model.head.w);
    model.head.b = Vector(classes, 0.0);
    model.check();
    return model;
}

inline Vector softmax(Vector logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double& x : logits) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (double& x : logits)
        x /= sum;
    return logits;
}

struct ForwardResult {
    Vector last_hidden;
    Vector class_probs;
};

// Mean-field propagation (no sampling) through GRBM and RBM stack, then the
// softmax head.
inline ForwardResult forward(const DbnModel& model, const Vector& encoded) {
    if (encoded.size() != model.input_width())
        throw DimensionMismatch("forward: encoded width " + std::to_string(encoded.size()) +
                                " does not match model input " +
                                std::to_string(model.input_width()));
    Vector h = grbm_hidden_probs(model.grbm, encoded);
    for (const auto& r : model.rbms)
        h = rbm_hidden_probs(r, h);
    Vector probs = softmax(affine(model.head.w, h, model.head.b));
    return ForwardResult{std::move(h), std::move(probs)};
}

inline ClassId predict(const DbnModel& model, const Vector& encoded) {
    const auto r = forward(model, encoded);
    std::size_t best = 0;
    for (std::size_t t = 1; t < r.class_probs.size(); ++t)
        if (r.class_probs[t] > r.class_probs[best])
            best = t; // strict: ties keep the lowest class index
    return static_cast<ClassId>(best);
}

// ---------------------------------------------------------------------------
// Gradients of the whole model
// ---------------------------------------------------------------------------

struct GradientBundle {
    LayerGradient grbm;
    std::vector<LayerGradient> rbms;
    Matrix head_dw;
    Vector head_db;

    static GradientBundle zeros_like(const DbnModel& model) {
        GradientBundle g;
        g.grbm = LayerGradient{Matrix(model.grbm.visible(), model.grbm.hidden()),
                               Vector(model.grbm.visible(), 0.0),
                               Vector(model.grbm.hidden(), 0.0)};
        for (const auto& r : model.rbms)
            g.rbms.push_back(LayerGradient{Matrix(r.visible(), r.hidden()),
                                           Vector(r.visible(), 0.0), Vector(r.hidden(), 0.0)});
        g.head_dw = Matrix(model.head.w.rows(), model.head.w.cols());
        g.head_db = Vector(model.head.b.size(), 0.0);
        return g;
    }

    bool congruent_with(const GradientBundle& o) const {
        if (!grbm.dw.same_shape(o.grbm.dw) || rbms.size() != o.rbms.size() ||
            !head_dw.same_shape(o.head_dw) || head_db.size() != o.head_db.size())
            return false;
        for (std::size_t i = 0; i < rbms.size(); ++i)
            if (!rbms[i].dw.same_shape(o.rbms[i].dw))
                return false;
        return true;
    }

    void add(const GradientBundle& o, double a = 1.0) {
        if (!congruent_with(o))
            throw ShapeMismatch("gradient bundles are not shape-congruent");
        grbm.add(o.grbm, a);
        for (std::size_t i = 0; i < rbms.size(); ++i)
            rbms[i].add(o.rbms[i], a);
        add_scaled(head_dw, o.head_dw, a);
        add_scaled(head_db, o.head_db, a);
    }

    void scale_by(double a) {
        grbm.scale_by(a);
        for (auto& r : rbms)
            r.scale_by(a);
        scale(head_dw, a);
        scale(head_db, a);
    }

    double l2_norm() const {
        double s = grbm.sum_sq();
        for (const auto& r : rbms)
            s += r.sum_sq();
        s += sum_squares(head_dw) + sum_squares(head_db);
        return std::sqrt(s);
    }

    // FNV over the raw parameter bytes, visitation order fixed.
    std::uint64_t checksum() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        auto eat_v = [&](const Vector& v) { h = fnv1a_bytes(v.data(), v.size() * sizeof(double), h); };
        auto eat_m = [&](const Matrix& m) {
            h = fnv1a_bytes(m.data().data(), m.size() * sizeof(double), h);
        };
        eat_m(grbm.dw); eat_v(grbm.db1); eat_v(grbm.db2);
        for (const auto& r : rbms) {
            eat_m(r.dw); eat_v(r.db1); eat_v(r.db2);
        }
        eat_m(head_dw); eat_v(head_db);
        return h;
    }

    bool operator==(const GradientBundle&) const = default;
};

struct EncodedSample {
    Vector input;
    ClassId label = ClassId::Normal;
};

inline std::vector<EncodedSample> encode_dataset(std::span<const FeatureVector> data,
                                                 const EncodingSpec& spec) {
    std::vector<EncodedSample> out;
    out.reserve(data.size());
    for (const auto& fv : data)
        out.push_back(EncodedSample{encode(fv, spec), fv.label});
    return out;
}

// Backpropagated gradient of the mean log-probability of the true class
// (ascent). GRBM/RBM visible biases take no part in the forward map, so their
// slots stay zero here; the generative term fills them when enabled.
inline GradientBundle supervised_gradient(const DbnModel& model,
                                          std::span<const EncodedSample> batch) {
    model.check();
    if (batch.empty())
        throw EmptyBatch("supervised_gradient: empty batch");

    GradientBundle g = GradientBundle::zeros_like(model);
    const std::size_t layers = 1 + model.rbms.size();

    std::vector<Vector> acts(layers + 1);
    for (const EncodedSample& s : batch) {
        if (s.input.size() != model.input_width())
            throw DimensionMismatch("supervised_gradient: sample width");
        // forward, keeping every activation
        acts[0] = s.input;
        acts[1] = grbm_hidden_probs(model.grbm, s.input);
        for (std::size_t i = 0; i < model.rbms.size(); ++i)
            acts[i + 2] = rbm_hidden_probs(model.rbms[i], acts[i + 1]);
        const Vector probs = softmax(affine(model.head.w, acts[layers], model.head.b));

        // d logits: one-hot(label) - probs
        Vector dlog = probs;
        for (double& x : dlog)
            x = -x;
        dlog[static_cast<std::size_t>(s.label)] += 1.0;

        outer_add(g.head_dw, dlog, acts[layers]);
        add_scaled(g.head_db, dlog, 1.0);

        Vector delta = affine_transposed(model.head.w, dlog, Vector(model.head.w.cols(), 0.0));
        for (std::size_t li = layers; li-- > 0;) {
            Vector dz = delta;
            const Vector& act = acts[li + 1];
            for (std::size_t j = 0; j < dz.size(); ++j)
                dz[j] *= act[j] * (1.0 - act[j]);
            if (li == 0) {
                Vector scaled(s.input.size());
                for (std::size_t m = 0; m < scaled.size(); ++m)
                    scaled[m] = s.input[m] / model.grbm.sigma[m];
                outer_add(g.grbm.dw, scaled, dz);
                add_scaled(g.grbm.db2, dz, 1.0);
            } else {
                const RbmLayer& r = model.rbms[li - 1];
                outer_add(g.rbms[li - 1].dw, acts[li], dz);
                add_scaled(g.rbms[li - 1].db2, dz, 1.0);
                delta = affine(r.w, dz, Vector(r.visible(), 0.0));
            }
        }
    }
    g.scale_by(1.0 / static_cast<double>(batch.size()));
    return g;
}

// Adds the layer-wise CD estimates to a supervised bundle so the exchanged
// gradient covers every layer's generative term as well.
inline void add_generative_term(GradientBundle& g, const DbnModel& model,
                                std::span<const EncodedSample> batch, unsigned cd_k,
                                std::mt19937_64& rng) {
    std::vector<Vector> inputs;
    inputs.reserve(batch.size());
    for (const auto& s : batch)
        inputs.push_back(s.input);
    g.grbm.add(cd_gradient(model.grbm, inputs, cd_k, rng));
    for (std::size_t i = 0; i < model.rbms.size(); ++i) {
        for (auto& v : inputs)
            v = i == 0 ? grbm_hidden_probs(model.grbm, v) : rbm_hidden_probs(model.rbms[i - 1], v);
        g.rbms[i].add(cd_gradient(model.rbms[i], inputs, cd_k, rng));
    }
}

// phi <- phi + mu * gradient (the ascent update applied verbatim).
inline DbnModel apply_update(const DbnModel& model, const GradientBundle& g, double mu) {
    if (!g.congruent_with(GradientBundle::zeros_like(model)))
        throw DimensionMismatch("apply_update: gradient does not match model shapes");
    DbnModel m = model;
    add_scaled(m.grbm.w, g.grbm.dw, mu);
    add_scaled(m.grbm.b1, g.grbm.db1, mu);
    add_scaled(m.grbm.b2, g.grbm.db2, mu);
    for (std::size_t i = 0; i < m.rbms.size(); ++i) {
        add_scaled(m.rbms[i].w, g.rbms[i].dw, mu);
        add_scaled(m.rbms[i].b1, g.rbms[i].db1, mu);
        add_scaled(m.rbms[i].b2, g.rbms[i].db2, mu);
    }
    add_scaled(m.head.w, g.head_dw, mu);
    add_scaled(m.head.b, g.head_db, mu);
    return m;
}

// ---------------------------------------------------------------------------
// Greedy layer-wise pre-training
// ---------------------------------------------------------------------------

struct PretrainConfig {
    std::size_t epochs = 5;
    double learning_rate = 0.05;
    std::size_t batch_size = 32;
    unsigned cd_k = 1;
};

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = n; i > 1; --i)
        std::swap(idx[i - 1], idx[uniform_index(rng, 0, i - 1)]);
    return idx;
}

template <typename Layer>
std::vector<double> pretrain_layer(Layer& layer, std::span<const Vector> data,
                                   const PretrainConfig& cfg, std::mt19937_64& rng) {
    std::vector<double> epoch_errors;
    const std::size_t bs = cfg.batch_size == 0 ? data.size() : cfg.batch_size;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = shuffled_indices(data.size(), rng);
        for (std::size_t at = 0; at < order.size(); at += bs) {
            std::vector<Vector> batch;
            for (std::size_t i = at; i < std::min(at + bs, order.size()); ++i)
                batch.push_back(data[order[i]]);
            const LayerGradient g = cd_gradient(layer, batch, cfg.cd_k, rng);
            add_scaled(layer.w, g.dw, cfg.learning_rate);
            add_scaled(layer.b1, g.db1, cfg.learning_rate);
            add_scaled(layer.b2, g.db2, cfg.learning_rate);
        }
        // mean-field reconstruction error over the full dataset
        double err = 0.0;
        for (const Vector& v : data) {
            Vector recon;
            if constexpr (std::is_same_v<Layer, GrbmLayer>)
                recon = grbm_visible_mean(layer, grbm_hidden_probs(layer, v));
            else
                recon = rbm_visible_probs(layer, rbm_hidden_probs(layer, v));
            for (std::size_t m = 0; m < v.size(); ++m) {
                const double d = v[m] - recon[m];
                err += d * d;
            }
        }
        epoch_errors.push_back(err / static_cast<double>(data.size()));
    }
    return epoch_errors;
}

} // namespace detail

inline std::vector<double> pretrain_grbm(GrbmLayer& layer, std::span<const Vector> data,
                                         const PretrainConfig& cfg, std::mt19937_64& rng) {
    if (data.empty())
        throw EmptyDataset("pretrain_grbm: no data");
    return detail::pretrain_layer(layer, data, cfg, rng);
}

inline std::vector<double> pretrain_rbm(RbmLayer& layer, std::span<const Vector> data,
                                        const PretrainConfig& cfg, std::mt19937_64& rng) {
    if (data.empty())
        throw EmptyDataset("pretrain_rbm: no data");
    return detail::pretrain_layer(layer, data, cfg, rng);
}

// Greedy bottom-up pre-training: the GRBM learns the encoded inputs, then
// each RBM learns the mean-field activations of the layer below it.
inline DbnModel pretrain(const DbnModel& model, std::span<const Vector> unlabeled,
                         const PretrainConfig& cfg, std::mt19937_64& rng) {
    model.check();
    if (unlabeled.empty())
        throw EmptyDataset("pretrain: no data");
    DbnModel m = model;
    if (cfg.epochs == 0)
        return m;

    std::vector<Vector> acts(unlabeled.begin(), unlabeled.end());
    detail::pretrain_layer(m.grbm, acts, cfg, rng);
    for (auto& v : acts)
        v = grbm_hidden_probs(m.grbm, v);
    for (auto& r : m.rbms) {
        detail::pretrain_layer(r, acts, cfg, rng);
        for (auto& v : acts)
            v = rbm_hidden_probs(r, v);
    }
    return m;
}

// Mean log-probability of the true labels (the quantity whose ascent the
// supervised gradient drives); reported to users negated as a loss.
inline double mean_log_likelihood(const DbnModel& model, std::span<const EncodedSample> data) {
    if (data.empty())
        throw EmptyDataset("mean_log_likelihood: no data");
    double total = 0.0;
    for (const auto& s : data) {
        const auto r = forward(model, s.input);
        const double p = r.class_probs[static_cast<std::size_t>(s.label)];
        total += std::max(std::log(p), -700.0);
    }
    return total / static_cast<double>(data.size());
}

} // namespace bcid

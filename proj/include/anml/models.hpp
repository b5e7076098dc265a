#pragma once

#include <string>
#include <variant>
#include <vector>

#include "anml/nn.hpp"
#include "anml/ops.hpp"

namespace anml {

// ---------------------------------------------------------------------------
// Architecture profiles. The paper fixes the layer counts and the parameter
// budgets (~6M total, ~2.3M fine-tuned head for ANML; ~3M / ~1M for the OML
// fine-tuning variants); channel counts, strides and paddings are chosen to
// meet those budgets and are plain data here, overridable by config.
// ---------------------------------------------------------------------------

struct ConvLayerCfg {
    int64_t out_channels;
    int64_t kernel;
    int64_t stride;
    int64_t pad;
};

struct ArchProfile {
    std::string name;
    int64_t input_hw = 0;
    int64_t input_ch = 1;
    std::vector<ConvLayerCfg> pln_convs;  // ANML prediction trunk (with batchnorm)
    std::vector<ConvLayerCfg> nm_convs;   // neuromodulatory trunk (with batchnorm)
    std::vector<ConvLayerCfg> oml_convs;  // OML representation stack (no batchnorm)
    int64_t head_classes = 0;             // ANML classifier width
    int64_t oml_hidden = 0;               // OML fc1 width
    int64_t oml_classes = 0;              // OML fc2 width

    int64_t conv_chain_spatial(const std::vector<ConvLayerCfg>& convs) const {
        int64_t hw = input_hw;
        for (const auto& c : convs) hw = conv_out_extent(hw, c.kernel, c.stride, c.pad);
        return hw;
    }
    int64_t conv_chain_latent(const std::vector<ConvLayerCfg>& convs) const {
        const int64_t hw = conv_chain_spatial(convs);
        return convs.back().out_channels * hw * hw;
    }
    int64_t pln_latent() const { return conv_chain_latent(pln_convs); }
    int64_t nm_latent() const { return conv_chain_latent(nm_convs); }
    int64_t oml_latent() const { return conv_chain_latent(oml_convs); }
};

inline ArchProfile make_profile(const std::string& name) {
    ArchProfile p;
    p.name = name;
    if (name == "full") {
        p.input_hw = 28;
        p.pln_convs = {{256, 3, 2, 1}, {256, 3, 2, 1}, {256, 3, 2, 0}};  // 28->14->7->3
        p.nm_convs = {{112, 3, 2, 1}, {112, 3, 2, 1}, {112, 3, 2, 0}};
        p.oml_convs = {{256, 3, 2, 1}, {256, 3, 2, 1}, {256, 3, 2, 0},
                       {256, 3, 1, 1}, {256, 3, 1, 1}, {256, 3, 1, 1}};
        p.head_classes = 1000;
        p.oml_hidden = 1024;
        p.oml_classes = 1000;
    } else if (name == "desk") {
        p.input_hw = 14;
        p.pln_convs = {{16, 3, 1, 0}, {16, 3, 2, 0}, {16, 3, 1, 0}};  // 14->12->5->3
        p.nm_convs = {{16, 3, 1, 0}, {16, 3, 2, 0}, {16, 3, 1, 0}};
        p.oml_convs = {{16, 3, 1, 0}, {16, 3, 2, 0}, {16, 3, 1, 0},
                       {16, 3, 1, 1}, {16, 3, 1, 1}, {16, 3, 1, 1}};
        p.head_classes = 64;
        p.oml_hidden = 96;
        p.oml_classes = 64;
    } else {
        throw ConfigError("unknown profile '" + name + "' (expected desk|full)");
    }
    return p;
}

// ---------------------------------------------------------------------------
// Treatments
// ---------------------------------------------------------------------------

enum class ModelArch { anml, oml };

struct TreatmentProfile {
    std::string name;
    ModelArch arch;
    bool meta_trained;  // trained with the outer/inner loop
    bool pretrained;    // trained i.i.d. on the meta-train image set instead
};

inline const std::vector<std::string>& treatment_names() {
    static const std::vector<std::string> names = {
        "ANML",        "ANML-FT:PLN", "ANML-FT:PLN+NM_out", "ANML-Unlimited", "OML",
        "OML-OLFT",    "OML-FT:PLN+RLN_final", "OML-Unlimited", "Scratch", "Pretrain"};
    return names;
}

inline TreatmentProfile treatment_profile(const std::string& name) {
    auto starts_with_anml = name.rfind("ANML", 0) == 0;
    for (const auto& known : treatment_names()) {
        if (known != name) continue;
        TreatmentProfile t;
        t.name = name;
        t.arch = starts_with_anml ? ModelArch::anml : ModelArch::oml;
        t.meta_trained = name != "Scratch" && name != "Pretrain";
        t.pretrained = name == "Pretrain";
        return t;
    }
    throw ConfigError("unknown treatment '" + name + "'");
}

// Flag table per treatment, keyed by parameter name prefix.
inline ParamFlags treatment_flags(const std::string& treatment, const std::string& param) {
    auto starts = [&param](const char* prefix) { return param.rfind(prefix, 0) == 0; };
    TreatmentProfile t = treatment_profile(treatment);
    ParamFlags f;
    if (t.arch == ModelArch::anml) {
        f.meta_learned = true;
        f.inner_plastic = starts("pln.");  // NM weights never update in the inner loop
        if (treatment == "ANML")
            f.metatest_plastic = starts("pln.head.");
        else if (treatment == "ANML-FT:PLN")
            f.metatest_plastic = starts("pln.");
        else if (treatment == "ANML-FT:PLN+NM_out")
            f.metatest_plastic = starts("pln.") || starts("nm.fc.");
        else  // ANML-Unlimited
            f.metatest_plastic = true;
    } else {
        f.meta_learned = treatment != "Scratch";
        f.inner_plastic = starts("pln.fc");  // RLN frozen inside the inner loop
        if (treatment == "OML" || treatment == "Pretrain")
            f.metatest_plastic = starts("pln.fc");
        else if (treatment == "OML-OLFT")
            f.metatest_plastic = starts("pln.fc2.");
        else if (treatment == "OML-FT:PLN+RLN_final")
            f.metatest_plastic = starts("pln.fc") || starts("rln.conv6.");
        else if (treatment == "Scratch") {
            f.metatest_plastic = true;  // nothing was learned before; everything can learn
            f.inner_plastic = true;
        } else  // OML-Unlimited
            f.metatest_plastic = true;
    }
    return f;
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

template <typename T>
struct AnmlModel {
    ArchProfile profile;
    ParameterSet<T> nm_params;
    ParameterSet<T> pln_params;
};

template <typename T>
struct OmlModel {
    ArchProfile profile;
    ParameterSet<T> rln_params;  // conv stack, outer-loop-learned only
    ParameterSet<T> pln_params;  // two fully connected layers
};

template <typename T>
using AnyModel = std::variant<AnmlModel<T>, OmlModel<T>>;

namespace detail {

inline std::vector<LayerSpec> conv_trunk_specs(const std::string& prefix,
                                               const std::vector<ConvLayerCfg>& convs,
                                               int64_t in_ch, bool batchnorm) {
    std::vector<LayerSpec> specs;
    int64_t ch = in_ch;
    for (size_t i = 0; i < convs.size(); ++i) {
        const auto& c = convs[i];
        const std::string idx = std::to_string(i + 1);
        specs.push_back(LayerSpec::conv(prefix + ".conv" + idx, ch, c.out_channels, c.kernel,
                                        c.stride, c.pad));
        if (batchnorm) specs.push_back(LayerSpec::bn(prefix + ".bn" + idx, c.out_channels));
        ch = c.out_channels;
    }
    return specs;
}

template <typename T>
void apply_treatment_flags(ParameterSet<T>& params, const std::string& treatment) {
    for (auto& e : params.entries()) e.flags = treatment_flags(treatment, e.name);
}

// Runs images through a conv trunk given a parameter view. Parameters are
// looked up by name so the same code serves the meta parameters and any
// inner-loop copy.
template <typename T>
Tensor<T> conv_trunk_forward(const ParameterSet<T>& params, const std::string& prefix,
                             const std::vector<ConvLayerCfg>& convs, bool batchnorm,
                             const Tensor<T>& images) {
    Tensor<T> h = images;
    for (size_t i = 0; i < convs.size(); ++i) {
        const auto& c = convs[i];
        const std::string idx = std::to_string(i + 1);
        h = add_channel_bias(conv2d(h, params.get(prefix + ".conv" + idx + ".weight"), c.stride, c.pad),
                             params.get(prefix + ".conv" + idx + ".bias"));
        if (batchnorm)
            h = batchnorm2d(h, params.get(prefix + ".bn" + idx + ".gamma"),
                            params.get(prefix + ".bn" + idx + ".beta"));
        h = relu(h);
    }
    return h;
}

}  // namespace detail

template <typename T>
AnmlModel<T> init_anml_model(const ArchProfile& profile, uint64_t seed,
                             const std::string& treatment = "ANML") {
    const int64_t latent = profile.pln_latent();
    std::vector<LayerSpec> nm_specs =
        detail::conv_trunk_specs("nm", profile.nm_convs, profile.input_ch, true);
    nm_specs.push_back(LayerSpec::fc("nm.fc", profile.nm_latent(), latent));
    std::vector<LayerSpec> pln_specs =
        detail::conv_trunk_specs("pln", profile.pln_convs, profile.input_ch, true);
    pln_specs.push_back(LayerSpec::fc("pln.head", latent, profile.head_classes));

    AnmlModel<T> model;
    model.profile = profile;
    model.nm_params = init_parameters<T>(nm_specs, mix_seed(seed, seed_stream::kInitParams, 1));
    model.pln_params = init_parameters<T>(pln_specs, mix_seed(seed, seed_stream::kInitParams, 2));
    detail::apply_treatment_flags(model.nm_params, treatment);
    detail::apply_treatment_flags(model.pln_params, treatment);
    return model;
}

template <typename T>
OmlModel<T> init_oml_model(const ArchProfile& profile, uint64_t seed,
                           const std::string& treatment = "OML") {
    std::vector<LayerSpec> rln_specs =
        detail::conv_trunk_specs("rln", profile.oml_convs, profile.input_ch, false);
    const int64_t latent = profile.oml_latent();
    std::vector<LayerSpec> fc_specs = {LayerSpec::fc("pln.fc1", latent, profile.oml_hidden),
                                       LayerSpec::fc("pln.fc2", profile.oml_hidden, profile.oml_classes)};
    OmlModel<T> model;
    model.profile = profile;
    model.rln_params = init_parameters<T>(rln_specs, mix_seed(seed, seed_stream::kInitParams, 3));
    model.pln_params = init_parameters<T>(fc_specs, mix_seed(seed, seed_stream::kInitParams, 4));
    detail::apply_treatment_flags(model.rln_params, treatment);
    detail::apply_treatment_flags(model.pln_params, treatment);
    return model;
}

template <typename T>
AnyModel<T> init_model(const std::string& treatment, const ArchProfile& profile, uint64_t seed) {
    TreatmentProfile t = treatment_profile(treatment);
    if (t.arch == ModelArch::anml) return init_anml_model<T>(profile, seed, treatment);
    return init_oml_model<T>(profile, seed, treatment);
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

template <typename T>
struct ForwardResult {
    Tensor<T> logits;
    Tensor<T> pre_gate;   // flattened prediction-trunk latent (OML: representation)
    Tensor<T> gate;       // sigmoid NM output (undefined for OML)
    Tensor<T> post_gate;  // gated latent (undefined for OML)
};

// Gated forward: gate = sigmoid(NM(images)); the PLN latent is multiplied
// element-wise by the gate before the classifier head.
template <typename T>
ForwardResult<T> anml_forward(const AnmlModel<T>& model, const ParameterSet<T>& pln,
                              const Tensor<T>& images) {
    const auto& p = model.profile;
    if (images.shape().size() != 4 || images.shape()[1] != p.input_ch ||
        images.shape()[2] != p.input_hw || images.shape()[3] != p.input_hw)
        throw ShapeError("anml_forward: expected [N," + std::to_string(p.input_ch) + "," +
                         std::to_string(p.input_hw) + "," + std::to_string(p.input_hw) +
                         "], got " + format_shape(images.shape()));
    ForwardResult<T> out;
    out.pre_gate = flatten(detail::conv_trunk_forward(pln, "pln", p.pln_convs, true, images));
    Tensor<T> nm_latent =
        flatten(detail::conv_trunk_forward(model.nm_params, "nm", p.nm_convs, true, images));
    out.gate = sigmoid(affine(nm_latent, model.nm_params.get("nm.fc.weight"),
                              model.nm_params.get("nm.fc.bias")));
    out.post_gate = mul(out.pre_gate, out.gate);
    out.logits = affine(out.post_gate, pln.get("pln.head.weight"), pln.get("pln.head.bias"));
    return out;
}

template <typename T>
ForwardResult<T> anml_forward(const AnmlModel<T>& model, const Tensor<T>& images) {
    return anml_forward(model, model.pln_params, images);
}

template <typename T>
ForwardResult<T> oml_forward(const OmlModel<T>& model, const ParameterSet<T>& pln,
                             const Tensor<T>& images) {
    const auto& p = model.profile;
    if (images.shape().size() != 4 || images.shape()[2] != p.input_hw)
        throw ShapeError("oml_forward: expected [N," + std::to_string(p.input_ch) + "," +
                         std::to_string(p.input_hw) + "," + std::to_string(p.input_hw) +
                         "], got " + format_shape(images.shape()));
    ForwardResult<T> out;
    out.pre_gate =
        flatten(detail::conv_trunk_forward(model.rln_params, "rln", p.oml_convs, false, images));
    Tensor<T> h1 = relu(affine(out.pre_gate, pln.get("pln.fc1.weight"), pln.get("pln.fc1.bias")));
    out.logits = affine(h1, pln.get("pln.fc2.weight"), pln.get("pln.fc2.bias"));
    return out;
}

template <typename T>
ForwardResult<T> oml_forward(const OmlModel<T>& model, const Tensor<T>& images) {
    return oml_forward(model, model.pln_params, images);
}

// Architecture-agnostic forward with an explicit prediction-parameter view.
template <typename T>
ForwardResult<T> model_forward(const AnyModel<T>& model, const ParameterSet<T>& pln,
                               const Tensor<T>& images) {
    if (std::holds_alternative<AnmlModel<T>>(model))
        return anml_forward(std::get<AnmlModel<T>>(model), pln, images);
    return oml_forward(std::get<OmlModel<T>>(model), pln, images);
}

template <typename T>
ForwardResult<T> model_forward(const AnyModel<T>& model, const Tensor<T>& images) {
    return model_forward(model, prediction_params(model), images);
}

// The parameter set transformed by the inner loop / meta-test fine-tuning.
template <typename T>
const ParameterSet<T>& prediction_params(const AnyModel<T>& model) {
    if (std::holds_alternative<AnmlModel<T>>(model))
        return std::get<AnmlModel<T>>(model).pln_params;
    return std::get<OmlModel<T>>(model).pln_params;
}

template <typename T>
ParameterSet<T>& prediction_params(AnyModel<T>& model) {
    if (std::holds_alternative<AnmlModel<T>>(model))
        return std::get<AnmlModel<T>>(model).pln_params;
    return std::get<OmlModel<T>>(model).pln_params;
}

// The companion set updated only by the outer loop (NM or RLN).
template <typename T>
const ParameterSet<T>& auxiliary_params(const AnyModel<T>& model) {
    if (std::holds_alternative<AnmlModel<T>>(model))
        return std::get<AnmlModel<T>>(model).nm_params;
    return std::get<OmlModel<T>>(model).rln_params;
}

template <typename T>
ParameterSet<T>& auxiliary_params(AnyModel<T>& model) {
    if (std::holds_alternative<AnmlModel<T>>(model))
        return std::get<AnmlModel<T>>(model).nm_params;
    return std::get<OmlModel<T>>(model).rln_params;
}

template <typename T>
const ArchProfile& model_profile(const AnyModel<T>& model) {
    if (std::holds_alternative<AnmlModel<T>>(model))
        return std::get<AnmlModel<T>>(model).profile;
    return std::get<OmlModel<T>>(model).profile;
}

template <typename T>
int64_t model_head_classes(const AnyModel<T>& model) {
    const ArchProfile& p = model_profile(model);
    return std::holds_alternative<AnmlModel<T>>(model) ? p.head_classes : p.oml_classes;
}

// Name of the classifier layer whose output columns map to classes.
template <typename T>
std::string head_layer_name(const AnyModel<T>& model) {
    return std::holds_alternative<AnmlModel<T>>(model) ? "pln.head" : "pln.fc2";
}

template <typename T>
AnyModel<T> deep_copy_model(const AnyModel<T>& model) {
    if (std::holds_alternative<AnmlModel<T>>(model)) {
        const auto& m = std::get<AnmlModel<T>>(model);
        return AnmlModel<T>{m.profile, m.nm_params.deep_copy(), m.pln_params.deep_copy()};
    }
    const auto& m = std::get<OmlModel<T>>(model);
    return OmlModel<T>{m.profile, m.rln_params.deep_copy(), m.pln_params.deep_copy()};
}

template <typename T>
int64_t model_total_scalars(const AnyModel<T>& model) {
    return auxiliary_params(model).total_scalars() + prediction_params(model).total_scalars();
}

}  // namespace anml

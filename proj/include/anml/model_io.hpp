#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "anml/checkpoint.hpp"
#include "anml/metatrain.hpp"
#include "anml/models.hpp"

namespace anml {

struct LoadedCheckpoint {
    AnyModel<float> model;
    std::optional<AdamState<float>> opt_state;
    CheckpointMeta meta;
};

inline void save_model_checkpoint(const std::filesystem::path& dir, const AnyModel<float>& model,
                                  const AdamState<float>* opt_state, CheckpointMeta meta) {
    meta.set("arch", std::holds_alternative<AnmlModel<float>>(model) ? "anml" : "oml");
    meta.set("profile", model_profile(model).name);
    std::filesystem::create_directories(dir);
    save_parameter_archive(dir / "manifest.txt", dir / "params.bin", merged_meta_view(model));
    if (opt_state)
        save_parameter_archive(dir / "opt_manifest.txt", dir / "opt_params.bin",
                               adam_state_to_archive(*opt_state));
    save_checkpoint_meta(dir / "meta.txt", meta);
}

inline LoadedCheckpoint load_model_checkpoint(const std::filesystem::path& dir) {
    ParameterSet<float> merged = load_parameter_archive(dir / "manifest.txt", dir / "params.bin");
    CheckpointMeta meta = load_checkpoint_meta(dir / "meta.txt");
    const std::string arch = meta.get("arch");
    const std::string profile_name = meta.get("profile");
    if (profile_name.empty())
        throw CheckpointError("checkpoint " + dir.string() + " lacks a profile entry");
    ArchProfile profile = make_profile(profile_name);

    LoadedCheckpoint out{AnyModel<float>{}, std::nullopt, meta};
    auto split_into = [&merged](ParameterSet<float>& aux, ParameterSet<float>& pln,
                                const std::string& aux_prefix) {
        for (const auto& e : merged.entries()) {
            if (e.name.rfind(aux_prefix, 0) == 0)
                aux.add(e.name, e.tensor, e.flags);
            else if (e.name.rfind("pln.", 0) == 0)
                pln.add(e.name, e.tensor, e.flags);
            else
                throw CheckpointError("unexpected parameter '" + e.name + "' in checkpoint");
        }
    };
    if (arch == "anml") {
        AnmlModel<float> m;
        m.profile = profile;
        split_into(m.nm_params, m.pln_params, "nm.");
        out.model = std::move(m);
    } else if (arch == "oml") {
        OmlModel<float> m;
        m.profile = profile;
        split_into(m.rln_params, m.pln_params, "rln.");
        out.model = std::move(m);
    } else {
        throw CheckpointError("checkpoint " + dir.string() + " has unknown arch '" + arch + "'");
    }

    if (std::filesystem::exists(dir / "opt_manifest.txt")) {
        ParameterSet<float> archive =
            load_parameter_archive(dir / "opt_manifest.txt", dir / "opt_params.bin");
        out.opt_state = adam_state_from_archive(archive, merged_meta_view(out.model));
    }
    return out;
}

// Re-applies a treatment's flag table to a loaded model. Errors out when the
// checkpoint architecture cannot serve the treatment.
inline void apply_treatment_to_model(AnyModel<float>& model, const std::string& treatment) {
    TreatmentProfile t = treatment_profile(treatment);
    const bool is_anml = std::holds_alternative<AnmlModel<float>>(model);
    if ((t.arch == ModelArch::anml) != is_anml)
        throw CheckpointError("treatment '" + treatment + "' needs " +
                              (t.arch == ModelArch::anml ? std::string("an ANML") : std::string("an OML")) +
                              " checkpoint, got " + (is_anml ? "anml" : "oml"));
    for (auto& e : auxiliary_params(model).entries())
        e.flags = treatment_flags(treatment, e.name);
    for (auto& e : prediction_params(model).entries())
        e.flags = treatment_flags(treatment, e.name);
}

}  // namespace anml

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "recg/corpus.hpp"
#include "recg/evalkit.hpp"
#include "recg/model.hpp"
#include "recg/objective.hpp"
#include "recg/synth.hpp"
#include "recg/trainer.hpp"

namespace recg {

/// Everything a run can be configured with. The text form is flat
/// `key = value` lines; `#` starts a comment. Keys are prefixed by section:
/// model.*, loss.*, train.*, eval.*, synth.*, ingest.*.
struct RunConfig {
  ModelConfig model;
  GenLossConfig loss;
  TrainConfig train;
  EvalConfig eval;
  SynthConfig synth;
  IngestOptions ingest;
};

/// Throws Parse (with the line number) on malformed lines, unknown keys and
/// unparsable values.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);
/// Canonical text form; parse_config(format_config(c)) reproduces c.
std::string format_config(const RunConfig& cfg);

}  // namespace recg

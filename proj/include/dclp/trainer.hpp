#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dclp/adam.hpp"
#include "dclp/checkpoint.hpp"
#include "dclp/dataset.hpp"
#include "dclp/model.hpp"

namespace dclp {

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double mean_loss = 0.0;
    double train_accuracy = 0.0;  // from the training-mode forward passes
};

/// Everything needed to continue training bit-for-bit.
struct TrainState {
    Model model;
    AdamState adam;
    Rng rng;
    std::size_t epoch = 0;  // completed epochs
    std::vector<EpochRecord> history;
};

struct TrainOptions {
    /// Directory for checkpoint.dclp and epochs.tsv; nothing is written when empty.
    std::string out_dir;
    std::function<void(const EpochRecord&)> on_epoch;
};

/// Builds the vocabulary from the training texts and initializes parameters
/// from the configured seed.
TrainState init_training(const std::vector<Example>& train_set, const RunConfig& cfg);

/// Runs epochs until `state.epoch == until_epoch`.
void run_epochs(TrainState& state, const std::vector<Example>& train_set, std::size_t until_epoch,
                const TrainOptions& options = {});

/// init_training followed by cfg.train.epochs epochs.
TrainState train(const std::vector<Example>& train_set, const RunConfig& cfg, const TrainOptions& options = {});

/// Epoch log: one `epoch<TAB>mean_loss<TAB>train_accuracy` line per epoch.
std::string format_history(const std::vector<EpochRecord>& history);

Checkpoint make_checkpoint(const TrainState& state);
TrainState restore_checkpoint(const Checkpoint& ckpt);
/// Model-only view of a checkpoint (optimizer state ignored).
Model model_from_checkpoint(const Checkpoint& ckpt);

struct Prediction {
    std::vector<double> probs;
    std::size_t label = 0;
    std::vector<double> image_embedding;
    std::vector<double> text_embedding;
};

/// Eval-mode forward of one pair.
Prediction predict(const Model& model, const Tensor& image, const std::string& text);

struct EvalResult {
    std::vector<std::string> ids;
    std::vector<std::size_t> gold;
    std::vector<std::size_t> predicted;
    std::vector<std::vector<double>> probs;
    std::vector<std::vector<double>> image_embeddings;
    std::vector<std::vector<double>> text_embeddings;

    double accuracy() const;
};

EvalResult evaluate(const Model& model, const std::vector<Example>& dataset);

}  // namespace dclp

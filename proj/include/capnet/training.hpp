#pragma once

#include <optional>
#include <string>
#include <vector>

#include "capnet/attention_eval.hpp"
#include "capnet/checkpoint.hpp"
#include "capnet/config.hpp"
#include "capnet/dataset.hpp"
#include "capnet/decoder.hpp"
#include "capnet/metrics.hpp"

namespace capnet {

struct TrainLogRow {
    std::size_t epoch = 0;
    double lr = 0;
    double train_loss = 0;
    double val_loss = 0;
};

std::string training_log_csv(const std::vector<TrainLogRow>& log);

// Attribute extractor: trunk + detection head trained on the weighted BCE.
struct ExtractorModel {
    EncoderConfig enc;
    std::size_t attr_vocab = 0;
    ParamStore params;
};

ExtractorModel make_extractor(const Config& cfg, std::size_t attr_vocab);

// Multi-hot labels over the attribute vocabulary from a sample's ground
// truth words (null attributes contribute nothing).
Tensor attribute_label_vector(const Sample& sample, std::size_t attr_vocab);

// Top-5 extractor ids by descending confidence.
AttrIds predicted_attributes(const ExtractorModel& model, const Tensor& image);

std::vector<TrainLogRow> train_attribute_extractor(ExtractorModel& model, const Dataset& data,
                                                   const Config& cfg);

// Teacher-forced captioner training. Attributes come from the ground truth
// unless attr_source = "extractor" and an extractor is supplied.
std::vector<TrainLogRow> train_captioner(CaptionModel& model, const Dataset& data,
                                         const Config& cfg,
                                         const ExtractorModel* extractor = nullptr);

// Greedy-decodes one split into a scoreable corpus (single reference per
// sample). Decoding parallelises across samples under CAPNET_THREADS.
CorpusPair decode_corpus(const CaptionModel& model, const Dataset& data, Split split,
                         const Config& cfg, const ExtractorModel* extractor);

// Greedy decodes with per-word attention maps for localization scoring.
std::vector<SampleTrace> decode_traces(const CaptionModel& model, const Dataset& data,
                                       Split split, const Config& cfg,
                                       const ExtractorModel* extractor);

struct AblationRow {
    Mode mode;
    MetricsReport report;
};

// Trains all four modes on shared data and seed, scores the test split and
// returns rows in table order adaptive, vanilla, attr_only, full.
std::vector<AblationRow> run_ablation(const Dataset& data, const Config& base_cfg);

std::string ablation_csv(const std::vector<AblationRow>& rows);

// Checkpoint helpers; models are rebuilt from the embedded config echo and
// tensor shapes, with loud failures on any mismatch.
void save_caption_model(const std::string& path, const CaptionModel& model, const Config& cfg,
                        const AdamState* adam = nullptr);
CaptionModel load_caption_model(const std::string& path);
void save_extractor(const std::string& path, const ExtractorModel& model, const Config& cfg,
                    const AdamState* adam = nullptr);
ExtractorModel load_extractor(const std::string& path);

// Loads sample images referenced by a manifest (resized to cfg.image_size).
void load_images(std::vector<Sample>& samples, const std::string& manifest_dir,
                 std::size_t image_size);

}  // namespace capnet

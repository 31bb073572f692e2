#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "difflab/denoiser.hpp"
#include "difflab/inversion.hpp"
#include "difflab/schedule.hpp"
#include "difflab/training.hpp"

namespace difflab {

// Checkpoints and inversion records share one container format: a text
// manifest ("difflab-manifest v1", `meta k v` lines, `array name rows cols
// f32 trainable|frozen` lines), an `@data` separator, then the raw arrays as
// little-endian float32, row-major, in manifest order.

struct Checkpoint {
    ScheduleSpec schedule;
    ParameterSet params;
    std::optional<LoraAdapter> adapter;
    std::map<std::string, std::string> extra_meta;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

void save_inversion(const std::string& path, const InversionResult& inv);
InversionResult load_inversion(const std::string& path);

// ---- CSV / image helpers ----

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

// One row per vector: "step,v0,v1,...". Row index is the step column.
void write_vectors_csv(const std::string& path, const std::vector<Vec>& rows);

void write_series_csv(const std::string& path, const std::string& value_name,
                      const std::vector<double>& values);

// 8-bit grayscale PGM from [0,1] data of length side*side.
void write_pgm(const std::string& path, const Vec& image, int side);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace difflab

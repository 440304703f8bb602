#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "metagraphloc/features.hpp"
#include "metagraphloc/model.hpp"
#include "metagraphloc/pca.hpp"

namespace mgl::io {

/// Input pipeline of one meta-training task.
struct TaskAlignment {
    std::string id;
    model::NormalizationParams normalization;
    std::optional<meta::PcaProjection> projection;

    friend bool operator==(const TaskAlignment&, const TaskAlignment&) = default;
};

struct Checkpoint {
    model::Model model;
    model::NormalizationParams normalization;  ///< input scaling the model was trained with
    std::vector<TaskAlignment> tasks;          ///< meta checkpoints only

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Line-oriented text:
///
///     #metagraphloc-checkpoint-v1
///     spec.arch=dec
///     ...                          key=value lines, fixed order
///     matrix <name> <rows> <cols>  followed by one comma-separated line per row
///     task <id>                    per meta task: normalization then optional PCA block
///     end
///
/// Doubles use shortest round-trip text, so read(write(c)) == c.
void write_checkpoint(const Checkpoint& checkpoint, std::ostream& out);
void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

/// Throws ParseError with the offending line number.
Checkpoint read_checkpoint(std::istream& in);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace mgl::io

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tsed/data/labels.hpp"

namespace tsed::data {

enum class ManifestKind { Strong, Weak, Unlabeled };

ManifestKind parse_manifest_kind(const std::string& name);
const char* to_string(ManifestKind kind);

/// Records of one manifest, grouped by clip in order of first appearance.
/// Exactly one of the three vectors is populated, according to `kind`.
struct DatasetIndex {
  ManifestKind kind = ManifestKind::Unlabeled;
  std::vector<EventList> strong;
  std::vector<WeakLabel> weak;
  std::vector<std::string> clips;

  std::size_t size() const;
  std::vector<std::string> clip_ids() const;
};

/// Tab-separated manifests with a header line:
///   strong     filename  onset  offset  event_label
///   weak       filename  event_labels          (comma-joined, may be empty)
///   unlabeled  filename
/// A strong row with empty onset, offset and label declares a clip without
/// events. Errors are std::runtime_error prefixed with "<path>:<line>: ".
DatasetIndex parse_manifest(const std::filesystem::path& path, ManifestKind kind, const Vocabulary& vocab);

void write_strong_manifest(const std::filesystem::path& path, const std::vector<EventList>& clips,
                           const Vocabulary& vocab);
void write_weak_manifest(const std::filesystem::path& path, const std::vector<WeakLabel>& clips,
                         const Vocabulary& vocab);
void write_unlabeled_manifest(const std::filesystem::path& path, const std::vector<std::string>& clips);

}  // namespace tsed::data

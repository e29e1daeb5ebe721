#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedinf/core.hpp"
#include "fedinf/nn.hpp"
#include "fedinf/training.hpp"

namespace fedinf {

struct DatasetMeta {
  int version = 1;
  int n = 0;
  int k = 0;
  int count = 0;
  std::uint64_t seed = 0;
};

struct DatasetReadResult {
  DatasetMeta meta;
  std::vector<ProbitPanel> panels;
  /// Rows whose sum missed 1 by more than the ingest tolerance and were
  /// renormalized.  Rows within tolerance are kept verbatim, which makes
  /// write -> read -> write byte-stable.
  int renormalized_rows = 0;
};

/// Text dataset format: a small header (version line, n, k, count, seed)
/// followed by one block per panel (id + label line, then n rows of k
/// probits at 9 significant digits).
void write_dataset(const std::string& path,
                   const std::vector<ProbitPanel>& panels,
                   std::uint64_t seed);

DatasetReadResult read_dataset(const std::string& path);

/// "K=<int>" header followed by a K x K row-major grid; validated to be
/// symmetric with unit diagonal on read.
void write_similarity(const std::string& path, const Mat& similarity);
Mat read_similarity(const std::string& path);

/// Versioned text checkpoint.  Values are hexfloat at fixed precision, so a
/// given model serializes to identical bytes on every platform and survives
/// a round-trip bit-exactly.  Meta entries echo how the model was produced.
void write_checkpoint(const std::string& path, const DeepSetModel& model,
                      const std::map<std::string, std::string>& meta);

struct CheckpointReadResult {
  DeepSetModel model;
  std::map<std::string, std::string> meta;
};

CheckpointReadResult read_checkpoint(const std::string& path);

/// CSV with columns step, clean_loss, adv_loss.
void write_loss_trace(const std::string& path,
                      const std::vector<TraceRow>& trace);

}  // namespace fedinf

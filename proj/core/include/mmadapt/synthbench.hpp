#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mmadapt/tensor.hpp"

namespace mmadapt {

// Global class ids of the synthetic organs.
enum class Organ : int { liver = 1, spleen = 2, kidney = 3 };

std::string organ_name(Organ organ);
Organ organ_from_name(const std::string& name);

enum class DomainRole { source, target };

// Appearance and content of one imaging domain.
struct DomainSpec {
  std::string name;
  DomainRole role = DomainRole::source;
  // Tissue intensity means in [0, 1].
  double air = 0.0;
  double body = 0.4;
  double liver = 0.6;
  double spleen = 0.5;
  double kidney = 0.7;
  // Scales every organ's offset from the body intensity.
  double contrast = 1.0;
  double noise_sigma = 0.03;
  // Amplitude of the smooth multiplicative bias field.
  double bias_amplitude = 0.0;
  // Organs drawn into every image, and those whose labels may be used for training.
  std::vector<Organ> organs{Organ::liver, Organ::spleen};
  std::vector<Organ> labeled_organs;

  double intensity(Organ organ) const;
  friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

// Built-in domains. Source domains label one organ each; the target labels none and
// differs from every source in several appearance parameters.
DomainSpec default_source_spec(Organ organ);
DomainSpec default_target_spec();

// "source_liver", "source_spleen", "source_kidney" or "target".
DomainSpec domain_spec_by_name(const std::string& name);

// JSON text of every spec field. Parsing validates and throws ConfigError.
std::string domain_spec_to_json(const DomainSpec& spec);
DomainSpec domain_spec_from_json(const std::string& text);

// Number of appearance parameters in which two specs differ.
int appearance_differences(const DomainSpec& a, const DomainSpec& b);

struct Sample {
  Tensor image;  // [1, 96, 96] in [0, 1]
  LabelMap truth;  // full multi-organ ground truth (global ids)
  std::string domain;
  std::uint64_t seed = 0;
};

constexpr std::size_t kSampleSize = 96;

// Deterministic per (spec, seed). Throws DataError when organs cannot be placed
// without overlap in 100 attempts.
Sample generate_sample(const DomainSpec& spec, std::uint64_t seed);

struct Dataset {
  DomainSpec spec;
  std::vector<Sample> samples;
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;

  std::vector<Tensor> images(const std::vector<std::size_t>& idx) const;
  // Throws DataError when a requested sample was loaded without labels.
  std::vector<LabelMap> truths(const std::vector<std::size_t>& idx) const;
  bool has_labels(std::size_t i) const;
};

// Seeds base_seed .. base_seed + n - 1. Split by index: sources 60/10/30, target 70/30.
Dataset generate_dataset(const DomainSpec& spec, std::size_t n, std::uint64_t base_seed);

// Hash over every image and label byte.
std::uint64_t dataset_digest(const Dataset& ds);

// Directory of flat little-endian f64 images and u8 label planes plus manifest.json.
// Missing label planes load as empty truths.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace mmadapt

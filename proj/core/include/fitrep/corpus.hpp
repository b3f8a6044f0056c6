#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fitrep::corpus {

// A catalog item as it arrives from upstream. raw_attrs carries the source
// listing fields; the synthetic generator fills them and real feeds may not.
struct Item {
  std::string item_id;
  std::string title;
  std::string image_ref;  // empty when absent
  std::optional<double> rank_score;
  std::map<std::string, std::string> raw_attrs;

  bool operator==(const Item&) const = default;
};

enum class DimKind { textual, numeric };

struct DimSpec {
  std::string name;
  DimKind kind;
  bool operator==(const DimSpec&) const = default;
};

// Ordered list of concept dimensions. Exactly one numeric dimension (the
// quantity) is allowed and it must come last; everything before it is text.
struct ConceptSchema {
  std::vector<DimSpec> dims;

  size_t d() const { return dims.size(); }
  size_t text_dim_count() const { return dims.empty() ? 0 : dims.size() - 1; }
  const DimSpec& quantity_dim() const { return dims.back(); }
  std::vector<std::string> text_dim_names() const;

  void validate() const;  // throws ValidationError

  // Stand-in 8-dimension product schema used until a reviewed taxonomy lands.
  static ConceptSchema default_schema();

  bool operator==(const ConceptSchema&) const = default;
};

// Labeled evaluation pair, normalized so item_a < item_b.
struct LabeledPair {
  std::string item_a;
  std::string item_b;
  bool is_duplicate = false;
  bool operator==(const LabeledPair&) const = default;
};

struct GroundTruth {
  std::vector<LabeledPair> pairs;
  std::map<std::string, std::string> planted_groups;  // item_id -> group id
};

struct GeneratorConfig {
  size_t n_groups = 1;
  size_t items_per_group = 1;
  size_t n_confounder_pairs = 0;
  double paraphrase_rate = 0.35;
  long max_quantity = 100;
  // Distinct planted profiles must differ in at least this many text dims.
  size_t min_tuple_distance = 2;
  // The dimension confounder pairs disagree on; every other attribute of the
  // pair is shared byte for byte.
  std::string confounder_dim = "material_primary";
  ConceptSchema schema = ConceptSchema::default_schema();
  std::map<std::string, std::vector<std::string>> vocab;     // per text dim
  std::map<std::string, std::vector<std::string>> synonyms;  // phrase -> variants

  // Schema-matched default vocabulary and paraphrase table.
  static GeneratorConfig defaults();
};

struct CorpusManifest {
  ConceptSchema schema;
  double q_max = 100.0;
  uint64_t seed = 0;
  size_t n_groups = 0;
  size_t items_per_group = 0;
  size_t n_confounder_pairs = 0;
};

// Deterministic synthetic corpus: n_groups planted duplicate groups whose
// members share an attribute tuple up to paraphrase noise, plus confounder
// pairs that look near-identical but differ in confounder_dim. Positive
// labels form a spanning chain within each group (members are transitively,
// not quadratically, labeled); each confounder pair yields one negative.
std::pair<std::vector<Item>, GroundTruth> generate_synthetic_corpus(const GeneratorConfig& cfg,
                                                                    uint64_t seed);

std::vector<Item> load_items(const std::filesystem::path& path);
void save_items(const std::filesystem::path& path, const std::vector<Item>& items);
std::string items_to_jsonl(const std::vector<Item>& items);

std::vector<LabeledPair> load_labeled_pairs(const std::filesystem::path& path);
void save_labeled_pairs(const std::filesystem::path& path, const std::vector<LabeledPair>& pairs);

CorpusManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const CorpusManifest& manifest);

}  // namespace fitrep::corpus

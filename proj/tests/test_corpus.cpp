#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fitrep/corpus.hpp"
#include "fitrep/errors.hpp"
#include "fitrep/io_util.hpp"

using namespace fitrep;
using corpus::ConceptSchema;
using corpus::DimKind;
using corpus::GeneratorConfig;
using corpus::Item;
using corpus::LabeledPair;

namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& leaf) {
  auto dir = fs::temp_directory_path() / leaf;
  fs::create_directories(dir);
  return dir;
}

GeneratorConfig small_config(size_t groups, size_t per_group, size_t confounders) {
  auto cfg = GeneratorConfig::defaults();
  cfg.n_groups = groups;
  cfg.items_per_group = per_group;
  cfg.n_confounder_pairs = confounders;
  return cfg;
}

}  // namespace

TEST_CASE("default schema shape") {
  auto schema = ConceptSchema::default_schema();
  schema.validate();
  CHECK(schema.d() == 8);
  CHECK(schema.text_dim_count() == 7);
  CHECK(schema.quantity_dim().name == "quantity");
  CHECK(schema.quantity_dim().kind == DimKind::numeric);
  auto names = schema.text_dim_names();
  CHECK(names.size() == 7);
  CHECK(names.front() == "material_primary");
}

TEST_CASE("schema validation rejects malformed layouts") {
  ConceptSchema s;
  CHECK_THROWS_AS(s.validate(), ValidationError);

  s.dims = {{"quantity", DimKind::numeric}};
  CHECK_THROWS_AS(s.validate(), ValidationError);

  s.dims = {{"color", DimKind::textual}, {"material", DimKind::textual}};
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("numeric quantity"), ValidationError);

  s.dims = {{"qty", DimKind::numeric}, {"color", DimKind::textual}, {"n", DimKind::numeric}};
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("only the last dim"), ValidationError);

  s.dims = {{"color", DimKind::textual}, {"color", DimKind::textual}, {"n", DimKind::numeric}};
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("duplicate"), ValidationError);

  s.dims = {{"", DimKind::textual}, {"n", DimKind::numeric}};
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("generator produces the requested shapes and labels") {
  auto cfg = small_config(6, 4, 3);
  auto [items, gt] = corpus::generate_synthetic_corpus(cfg, 7);

  CHECK(items.size() == 6 * 4 + 2 * 3);

  size_t positives = 0, negatives = 0;
  for (const auto& p : gt.pairs) {
    CHECK(p.item_a < p.item_b);
    (p.is_duplicate ? positives : negatives) += 1;
  }
  // positives form a chain per group, one negative per confounder pair
  CHECK(positives == 6 * (4 - 1));
  CHECK(negatives == 3);

  std::set<std::string> ids;
  for (const auto& item : items) {
    CHECK(ids.insert(item.item_id).second);
    CHECK(!item.title.empty());
    REQUIRE(item.raw_attrs.count("quantity") == 1);
    long q = std::stol(item.raw_attrs.at("quantity"));
    CHECK(q >= 1);
    CHECK(q <= cfg.max_quantity);
  }

  // chained positives stay within one planted group
  for (const auto& p : gt.pairs) {
    if (!p.is_duplicate) continue;
    CHECK(gt.planted_groups.at(p.item_a) == gt.planted_groups.at(p.item_b));
  }
}

TEST_CASE("group members share a quantity and, without paraphrase, all attrs") {
  auto cfg = small_config(4, 3, 0);
  cfg.paraphrase_rate = 0.0;
  auto [items, gt] = corpus::generate_synthetic_corpus(cfg, 11);

  std::map<std::string, std::vector<const Item*>> by_group;
  for (const auto& item : items) by_group[gt.planted_groups.at(item.item_id)].push_back(&item);
  REQUIRE(by_group.size() == 4);
  for (const auto& [group, members] : by_group) {
    REQUIRE(members.size() == 3);
    for (size_t i = 1; i < members.size(); ++i) {
      CHECK(members[i]->raw_attrs == members[0]->raw_attrs);
    }
  }

  // distinct planted profiles differ in at least min_tuple_distance text dims
  auto text_dims = cfg.schema.text_dim_names();
  std::vector<const Item*> leaders;
  for (const auto& [group, members] : by_group) leaders.push_back(members[0]);
  for (size_t i = 0; i < leaders.size(); ++i) {
    for (size_t j = i + 1; j < leaders.size(); ++j) {
      size_t differing = 0;
      for (const auto& name : text_dims) {
        if (leaders[i]->raw_attrs.at(name) != leaders[j]->raw_attrs.at(name)) ++differing;
      }
      CHECK(differing >= cfg.min_tuple_distance);
    }
  }
}

TEST_CASE("confounder pairs differ only in the confounder dimension") {
  auto cfg = small_config(2, 2, 5);
  auto [items, gt] = corpus::generate_synthetic_corpus(cfg, 3);

  std::map<std::string, const Item*> by_id;
  for (const auto& item : items) by_id[item.item_id] = &item;

  size_t checked = 0;
  for (const auto& p : gt.pairs) {
    if (p.is_duplicate) continue;
    const Item* a = by_id.at(p.item_a);
    const Item* b = by_id.at(p.item_b);
    CHECK(a->raw_attrs.at(cfg.confounder_dim) != b->raw_attrs.at(cfg.confounder_dim));
    for (const auto& [key, value] : a->raw_attrs) {
      if (key == cfg.confounder_dim) continue;
      CHECK(b->raw_attrs.at(key) == value);
    }
    CHECK(a->raw_attrs.at("quantity") == b->raw_attrs.at("quantity"));
    ++checked;
  }
  CHECK(checked == 5);
}

TEST_CASE("generation is deterministic in the seed") {
  auto cfg = small_config(3, 3, 2);
  auto [items1, gt1] = corpus::generate_synthetic_corpus(cfg, 99);
  auto [items2, gt2] = corpus::generate_synthetic_corpus(cfg, 99);
  CHECK(items1 == items2);
  CHECK(gt1.pairs == gt2.pairs);

  auto [items3, gt3] = corpus::generate_synthetic_corpus(cfg, 100);
  CHECK(items1 != items3);
}

TEST_CASE("generator rejects impossible configurations") {
  auto cfg = small_config(1, 1, 0);
  cfg.n_groups = 0;
  CHECK_THROWS_AS(corpus::generate_synthetic_corpus(cfg, 1), ValidationError);

  cfg = small_config(1, 1, 0);
  cfg.items_per_group = 0;
  CHECK_THROWS_AS(corpus::generate_synthetic_corpus(cfg, 1), ValidationError);

  cfg = small_config(1, 1, 0);
  cfg.max_quantity = 0;
  CHECK_THROWS_AS(corpus::generate_synthetic_corpus(cfg, 1), ValidationError);

  cfg = small_config(1, 1, 0);
  cfg.paraphrase_rate = 1.5;
  CHECK_THROWS_AS(corpus::generate_synthetic_corpus(cfg, 1), ValidationError);

  cfg = small_config(1, 1, 1);
  cfg.confounder_dim = "no_such_dim";
  CHECK_THROWS_WITH_AS(corpus::generate_synthetic_corpus(cfg, 1),
                       doctest::Contains("no_such_dim"), ValidationError);

  cfg = small_config(1, 1, 0);
  cfg.min_tuple_distance = 99;
  CHECK_THROWS_AS(corpus::generate_synthetic_corpus(cfg, 1), ValidationError);

  // one-word vocabulary cannot satisfy the distance constraint across groups
  GeneratorConfig tiny;
  tiny.schema.dims = {{"color", DimKind::textual}, {"quantity", DimKind::numeric}};
  tiny.vocab = {{"color", {"red"}}};
  tiny.n_groups = 2;
  tiny.items_per_group = 1;
  tiny.min_tuple_distance = 1;
  CHECK_THROWS_WITH_AS(corpus::generate_synthetic_corpus(tiny, 1),
                       doctest::Contains("vocabulary too small"), ValidationError);
}

TEST_CASE("items jsonl round trip") {
  auto dir = temp_dir("fitrep_corpus_items");
  auto cfg = small_config(2, 2, 1);
  auto [items, gt] = corpus::generate_synthetic_corpus(cfg, 5);

  auto path = dir / "items.jsonl";
  corpus::save_items(path, items);
  auto back = corpus::load_items(path);
  CHECK(back == items);

  // optional fields default cleanly
  io::atomic_write_file(path, "{\"item_id\":\"solo\"}\n");
  auto minimal = corpus::load_items(path);
  REQUIRE(minimal.size() == 1);
  CHECK(minimal[0].item_id == "solo");
  CHECK(minimal[0].title.empty());
  CHECK(minimal[0].image_ref.empty());
  CHECK(!minimal[0].rank_score.has_value());
  CHECK(minimal[0].raw_attrs.empty());
}

TEST_CASE("items loader pinpoints bad lines") {
  auto dir = temp_dir("fitrep_corpus_bad_items");
  auto path = dir / "items.jsonl";

  io::atomic_write_file(path, "{\"item_id\":\"a\"}\nnot json\n");
  CHECK_THROWS_WITH_AS(corpus::load_items(path), doctest::Contains("line 2"), ValidationError);

  io::atomic_write_file(path, "{\"title\":\"no id\"}\n");
  CHECK_THROWS_WITH_AS(corpus::load_items(path), doctest::Contains("missing item_id"),
                       ValidationError);

  io::atomic_write_file(path, "{\"item_id\":\"\"}\n");
  CHECK_THROWS_AS(corpus::load_items(path), ValidationError);

  io::atomic_write_file(path, "{\"item_id\":\"a\"}\n{\"item_id\":\"a\"}\n");
  CHECK_THROWS_WITH_AS(corpus::load_items(path), doctest::Contains("duplicate item_id"),
                       ValidationError);

  io::atomic_write_file(path, "{\"item_id\":\"a\",\"rank_score\":\"high\"}\n");
  CHECK_THROWS_WITH_AS(corpus::load_items(path), doctest::Contains("rank_score"), ValidationError);

  io::atomic_write_file(path, "{\"item_id\":\"a\",\"raw_attrs\":{\"n\":3}}\n");
  CHECK_THROWS_WITH_AS(corpus::load_items(path), doctest::Contains("raw_attrs"), ValidationError);

  CHECK_THROWS_AS(corpus::load_items(dir / "absent.jsonl"), ValidationError);
}

TEST_CASE("labeled pairs round trip, normalization and dedupe") {
  auto dir = temp_dir("fitrep_corpus_pairs");
  auto path = dir / "pairs.jsonl";

  std::vector<LabeledPair> pairs{{"a", "b", true}, {"b", "c", false}};
  corpus::save_labeled_pairs(path, pairs);
  CHECK(corpus::load_labeled_pairs(path) == pairs);

  // reversed order is normalized on load
  io::atomic_write_file(path, "{\"item_a\":\"z9\",\"item_b\":\"a1\",\"is_duplicate\":true}\n");
  auto loaded = corpus::load_labeled_pairs(path);
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].item_a == "a1");
  CHECK(loaded[0].item_b == "z9");

  // repeated identical lines collapse to one pair
  io::atomic_write_file(path,
                        "{\"item_a\":\"a\",\"item_b\":\"b\",\"is_duplicate\":true}\n"
                        "{\"item_a\":\"b\",\"item_b\":\"a\",\"is_duplicate\":true}\n");
  CHECK(corpus::load_labeled_pairs(path).size() == 1);
}

TEST_CASE("labeled pairs loader rejects malformed rows") {
  auto dir = temp_dir("fitrep_corpus_bad_pairs");
  auto path = dir / "pairs.jsonl";

  io::atomic_write_file(path, "{\"item_a\":\"a\",\"item_b\":\"a\",\"is_duplicate\":true}\n");
  CHECK_THROWS_WITH_AS(corpus::load_labeled_pairs(path), doctest::Contains("self pair"),
                       ValidationError);

  io::atomic_write_file(path,
                        "{\"item_a\":\"a\",\"item_b\":\"b\",\"is_duplicate\":true}\n"
                        "{\"item_a\":\"b\",\"item_b\":\"a\",\"is_duplicate\":false}\n");
  CHECK_THROWS_WITH_AS(corpus::load_labeled_pairs(path), doctest::Contains("contradictory"),
                       ValidationError);

  io::atomic_write_file(path, "{\"item_a\":\"a\",\"item_b\":\"b\"}\n");
  CHECK_THROWS_WITH_AS(corpus::load_labeled_pairs(path),
                       doctest::Contains("expected item_a, item_b, is_duplicate"),
                       ValidationError);

  io::atomic_write_file(path, "{\"item_a\":\"a\",\"item_b\":\"b\",\"is_duplicate\":\"yes\"}\n");
  CHECK_THROWS_WITH_AS(corpus::load_labeled_pairs(path), doctest::Contains("bad field types"),
                       ValidationError);
}

TEST_CASE("manifest round trip and validation") {
  auto dir = temp_dir("fitrep_corpus_manifest");
  auto path = dir / "manifest.json";

  corpus::CorpusManifest m;
  m.schema = ConceptSchema::default_schema();
  m.q_max = 250.0;
  m.seed = 17;
  m.n_groups = 50;
  m.items_per_group = 5;
  m.n_confounder_pairs = 40;
  corpus::save_manifest(path, m);

  auto back = corpus::load_manifest(path);
  CHECK(back.schema == m.schema);
  CHECK(back.q_max == m.q_max);
  CHECK(back.seed == m.seed);
  CHECK(back.n_groups == m.n_groups);
  CHECK(back.items_per_group == m.items_per_group);
  CHECK(back.n_confounder_pairs == m.n_confounder_pairs);

  io::atomic_write_file(path, "{\"q_max\": 10}\n");
  CHECK_THROWS_WITH_AS(corpus::load_manifest(path), doctest::Contains("schema.dims"),
                       ValidationError);

  io::atomic_write_file(path, "not json");
  CHECK_THROWS_AS(corpus::load_manifest(path), ValidationError);

  corpus::save_manifest(path, m);
  auto text = io::read_file(path);
  auto spot = text.find("\"q_max\": 250.0");
  CHECK(spot != std::string::npos);
}

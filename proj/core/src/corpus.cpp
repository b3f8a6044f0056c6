#include "fitrep/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fitrep/errors.hpp"
#include "fitrep/io_util.hpp"
#include "fitrep/rng.hpp"

namespace fitrep::corpus {

using nlohmann::json;

std::vector<std::string> ConceptSchema::text_dim_names() const {
  std::vector<std::string> names;
  names.reserve(text_dim_count());
  for (size_t i = 0; i + 1 < dims.size(); ++i) names.push_back(dims[i].name);
  return names;
}

void ConceptSchema::validate() const {
  if (dims.size() < 2) throw ValidationError("schema needs at least one text dim and a quantity dim");
  std::set<std::string> seen;
  for (const auto& d : dims) {
    if (d.name.empty()) throw ValidationError("schema dim with empty name");
    if (!seen.insert(d.name).second) throw ValidationError("duplicate schema dim: " + d.name);
  }
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i].kind != DimKind::textual) {
      throw ValidationError("schema dim '" + dims[i].name + "' must be textual; only the last dim is numeric");
    }
  }
  if (dims.back().kind != DimKind::numeric) {
    throw ValidationError("last schema dim must be the numeric quantity");
  }
}

ConceptSchema ConceptSchema::default_schema() {
  return ConceptSchema{{
      {"material_primary", DimKind::textual},
      {"color_primary", DimKind::textual},
      {"item_category", DimKind::textual},
      {"material_secondary", DimKind::textual},
      {"style", DimKind::textual},
      {"brand_hint", DimKind::textual},
      {"usage_scene", DimKind::textual},
      {"quantity", DimKind::numeric},
  }};
}

GeneratorConfig GeneratorConfig::defaults() {
  GeneratorConfig cfg;
  cfg.vocab = {
      {"material_primary",
       {"oak", "walnut", "bamboo", "stainless steel", "carbon steel", "aluminum", "copper",
        "ceramic", "porcelain", "tempered glass", "leather", "canvas", "silicone", "marble"}},
      {"color_primary",
       {"black", "white", "charcoal", "navy", "olive", "beige", "terracotta", "slate gray",
        "ivory", "forest green"}},
      {"item_category",
       {"mixing bowl", "serving tray", "storage jar", "cutting board", "desk organizer",
        "plant stand", "table lamp", "wall shelf", "coat rack", "spice rack", "utensil holder",
        "picture frame"}},
      {"material_secondary",
       {"brass", "cork", "felt", "rubber", "nylon", "chrome", "rattan", "jute", "acacia",
        "birch"}},
      {"style",
       {"minimalist", "rustic", "industrial", "mid-century", "scandinavian", "farmhouse",
        "art deco", "contemporary"}},
      {"brand_hint",
       {"Northwind", "Bluepine", "Casaline", "Ferrowell", "Oakmere", "Vantora", "Kestrel & Co",
        "Hemlock House"}},
      {"usage_scene",
       {"kitchen counter", "dining room", "home office", "entryway", "balcony garden",
        "workshop", "living room", "pantry"}},
  };
  cfg.synonyms = {
      {"oak", {"solid oak", "oak wood"}},
      {"walnut", {"walnut wood", "dark walnut"}},
      {"bamboo", {"natural bamboo"}},
      {"stainless steel", {"brushed stainless", "inox steel"}},
      {"carbon steel", {"high-carbon steel"}},
      {"aluminum", {"aluminium", "anodized aluminum"}},
      {"copper", {"polished copper"}},
      {"ceramic", {"glazed ceramic"}},
      {"porcelain", {"fine porcelain"}},
      {"tempered glass", {"toughened glass"}},
      {"leather", {"genuine leather", "full-grain leather"}},
      {"canvas", {"cotton canvas"}},
      {"silicone", {"food-grade silicone"}},
      {"marble", {"natural marble"}},
      {"black", {"jet black", "matte black"}},
      {"white", {"pure white", "matte white"}},
      {"charcoal", {"charcoal gray"}},
      {"navy", {"navy blue", "deep navy"}},
      {"olive", {"olive green"}},
      {"beige", {"warm beige", "sand beige"}},
      {"terracotta", {"burnt terracotta"}},
      {"slate gray", {"slate grey"}},
      {"ivory", {"soft ivory"}},
      {"forest green", {"deep forest green"}},
      {"mixing bowl", {"mixing basin", "prep bowl"}},
      {"serving tray", {"serving platter tray"}},
      {"storage jar", {"pantry jar", "storage canister"}},
      {"cutting board", {"chopping board"}},
      {"desk organizer", {"desktop organizer", "desk tidy"}},
      {"plant stand", {"planter stand", "flower pot stand"}},
      {"table lamp", {"accent table lamp"}},
      {"wall shelf", {"wall-mounted shelf", "floating shelf"}},
      {"coat rack", {"coat stand"}},
      {"spice rack", {"spice organizer"}},
      {"utensil holder", {"utensil crock", "utensil caddy"}},
      {"picture frame", {"photo frame"}},
      {"brass", {"antique brass"}},
      {"cork", {"natural cork"}},
      {"felt", {"wool felt"}},
      {"rubber", {"non-slip rubber"}},
      {"nylon", {"woven nylon"}},
      {"chrome", {"polished chrome"}},
      {"rattan", {"woven rattan"}},
      {"jute", {"braided jute"}},
      {"acacia", {"acacia wood"}},
      {"birch", {"birch wood"}},
      {"minimalist", {"minimal"}},
      {"rustic", {"rustic-style"}},
      {"industrial", {"industrial-style"}},
      {"mid-century", {"mid century modern"}},
      {"scandinavian", {"nordic"}},
      {"farmhouse", {"country farmhouse"}},
      {"art deco", {"deco-style"}},
      {"contemporary", {"modern contemporary"}},
      {"kitchen counter", {"kitchen countertop"}},
      {"dining room", {"dining area"}},
      {"home office", {"study room"}},
      {"entryway", {"hallway entry"}},
      {"balcony garden", {"patio garden"}},
      {"workshop", {"garage workshop"}},
      {"living room", {"lounge room"}},
      {"pantry", {"kitchen pantry"}},
  };
  return cfg;
}

namespace {

std::string pad_number(size_t n, int width) {
  std::string s = std::to_string(n);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

using Tuple = std::vector<std::string>;  // one value per text dim, schema order

size_t tuple_distance(const Tuple& a, const Tuple& b) {
  size_t d = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) ++d;
  }
  return d;
}

struct ProfilePool {
  std::vector<Tuple> accepted;

  bool admissible(const Tuple& t, size_t min_dist) const {
    for (const auto& other : accepted) {
      if (tuple_distance(t, other) < min_dist) return false;
    }
    return true;
  }
};

Tuple sample_tuple(const GeneratorConfig& cfg, const std::vector<std::string>& dim_names,
                   Rng& rng) {
  Tuple t;
  t.reserve(dim_names.size());
  for (const auto& name : dim_names) {
    const auto& values = cfg.vocab.at(name);
    t.push_back(values[rng.next_index(values.size())]);
  }
  return t;
}

std::string maybe_paraphrase(const GeneratorConfig& cfg, const std::string& phrase, Rng& rng) {
  if (rng.next_double() >= cfg.paraphrase_rate) return phrase;
  auto it = cfg.synonyms.find(phrase);
  if (it == cfg.synonyms.end() || it->second.empty()) return phrase;
  return it->second[rng.next_index(it->second.size())];
}

Item make_item(const GeneratorConfig& cfg, const std::string& id,
               const std::vector<std::string>& dim_names, const Tuple& phrases, long quantity,
               Rng& rng) {
  Item item;
  item.item_id = id;
  std::ostringstream title;
  for (size_t i = 0; i < dim_names.size(); ++i) {
    item.raw_attrs[dim_names[i]] = phrases[i];
    if (i) title << " ";
    title << phrases[i];
  }
  title << " set of " << quantity;
  item.title = title.str();
  item.raw_attrs[cfg.schema.quantity_dim().name] = std::to_string(quantity);
  item.rank_score = std::round(rng.next_double() * 1e6) / 1e6;
  return item;
}

void validate_generator_config(const GeneratorConfig& cfg) {
  cfg.schema.validate();
  if (cfg.n_groups < 1) throw ValidationError("n_groups must be >= 1");
  if (cfg.items_per_group < 1) throw ValidationError("items_per_group must be >= 1");
  if (cfg.max_quantity < 1) throw ValidationError("max_quantity must be >= 1");
  if (cfg.paraphrase_rate < 0.0 || cfg.paraphrase_rate > 1.0) {
    throw ValidationError("paraphrase_rate must be in [0, 1]");
  }
  auto text_dims = cfg.schema.text_dim_names();
  for (const auto& name : text_dims) {
    auto it = cfg.vocab.find(name);
    if (it == cfg.vocab.end() || it->second.empty()) {
      throw ValidationError("vocab missing values for dim '" + name + "'");
    }
  }
  if (cfg.n_confounder_pairs > 0) {
    bool found = false;
    for (const auto& name : text_dims) found = found || name == cfg.confounder_dim;
    if (!found) throw ValidationError("confounder_dim '" + cfg.confounder_dim + "' not a text dim");
    if (cfg.vocab.at(cfg.confounder_dim).size() < 2) {
      throw ValidationError("confounder_dim vocabulary needs at least 2 values");
    }
  }
  if (cfg.min_tuple_distance > text_dims.size()) {
    throw ValidationError("min_tuple_distance exceeds number of text dims");
  }
}

}  // namespace

std::pair<std::vector<Item>, GroundTruth> generate_synthetic_corpus(const GeneratorConfig& cfg,
                                                                    uint64_t seed) {
  validate_generator_config(cfg);
  const auto dim_names = cfg.schema.text_dim_names();
  size_t confounder_idx = dim_names.size();
  for (size_t i = 0; i < dim_names.size(); ++i) {
    if (dim_names[i] == cfg.confounder_dim) confounder_idx = i;
  }

  Rng rng(seed);
  ProfilePool pool;
  const size_t max_attempts = 1000 * (cfg.n_groups + cfg.n_confounder_pairs + 1);
  size_t attempts = 0;
  auto draw_profile = [&](size_t min_dist) {
    for (;;) {
      if (++attempts > max_attempts) {
        throw ValidationError("attribute vocabulary too small for requested corpus");
      }
      Tuple t = sample_tuple(cfg, dim_names, rng);
      if (pool.admissible(t, min_dist)) return t;
    }
  };

  std::vector<Item> items;
  GroundTruth gt;

  for (size_t g = 0; g < cfg.n_groups; ++g) {
    Tuple profile = draw_profile(cfg.min_tuple_distance);
    pool.accepted.push_back(profile);
    long quantity = 1 + static_cast<long>(rng.next_index(static_cast<size_t>(cfg.max_quantity)));
    std::string group_id = "g" + pad_number(g, 4);
    std::string prev_id;
    for (size_t m = 0; m < cfg.items_per_group; ++m) {
      Tuple phrases = profile;
      for (auto& phrase : phrases) phrase = maybe_paraphrase(cfg, phrase, rng);
      std::string id = group_id + "-" + pad_number(m, 2);
      items.push_back(make_item(cfg, id, dim_names, phrases, quantity, rng));
      gt.planted_groups[id] = group_id;
      if (!prev_id.empty()) gt.pairs.push_back({prev_id, id, true});
      prev_id = id;
    }
  }

  for (size_t c = 0; c < cfg.n_confounder_pairs; ++c) {
    // Confounder pairs share every auxiliary attribute byte for byte (no
    // paraphrase noise) and disagree only in confounder_dim.
    Tuple base = draw_profile(cfg.min_tuple_distance);
    const auto& conf_vocab = cfg.vocab.at(cfg.confounder_dim);
    Tuple alt = base;
    size_t guard = 0;
    do {
      alt[confounder_idx] = conf_vocab[rng.next_index(conf_vocab.size())];
      if (++guard > 1000) throw ValidationError("confounder_dim vocabulary too small");
    } while (alt[confounder_idx] == base[confounder_idx] || !pool.admissible(alt, 1));
    pool.accepted.push_back(base);
    pool.accepted.push_back(alt);

    long quantity = 1 + static_cast<long>(rng.next_index(static_cast<size_t>(cfg.max_quantity)));
    std::string tag = "c" + pad_number(c, 4);
    std::string id_a = tag + "-a";
    std::string id_b = tag + "-b";
    items.push_back(make_item(cfg, id_a, dim_names, base, quantity, rng));
    items.push_back(make_item(cfg, id_b, dim_names, alt, quantity, rng));
    gt.planted_groups[id_a] = tag + "a";
    gt.planted_groups[id_b] = tag + "b";
    gt.pairs.push_back({id_a, id_b, false});
  }

  for (auto& p : gt.pairs) {
    if (p.item_b < p.item_a) std::swap(p.item_a, p.item_b);
  }
  return {std::move(items), std::move(gt)};
}

namespace {

json item_to_json(const Item& item) {
  json j;
  j["item_id"] = item.item_id;
  j["title"] = item.title;
  if (!item.image_ref.empty()) j["image_ref"] = item.image_ref;
  if (item.rank_score.has_value()) j["rank_score"] = *item.rank_score;
  if (!item.raw_attrs.empty()) j["raw_attrs"] = item.raw_attrs;
  return j;
}

Item item_from_json(const json& j, size_t line_no) {
  auto fail = [&](const std::string& msg) -> ValidationError {
    return ValidationError("line " + std::to_string(line_no) + ": " + msg);
  };
  if (!j.is_object()) throw fail("not a JSON object");
  if (!j.contains("item_id")) throw fail("missing item_id");
  if (!j["item_id"].is_string() || j["item_id"].get<std::string>().empty()) {
    throw fail("item_id must be a non-empty string");
  }
  Item item;
  item.item_id = j["item_id"].get<std::string>();
  if (j.contains("title")) {
    if (!j["title"].is_string()) throw fail("title must be a string");
    item.title = j["title"].get<std::string>();
  }
  if (j.contains("image_ref")) {
    if (!j["image_ref"].is_string()) throw fail("image_ref must be a string");
    item.image_ref = j["image_ref"].get<std::string>();
  }
  if (j.contains("rank_score")) {
    if (!j["rank_score"].is_number()) throw fail("rank_score must be a number");
    double v = j["rank_score"].get<double>();
    if (!std::isfinite(v)) throw fail("rank_score not finite");
    item.rank_score = v;
  }
  if (j.contains("raw_attrs")) {
    if (!j["raw_attrs"].is_object()) throw fail("raw_attrs must be an object");
    for (const auto& [key, value] : j["raw_attrs"].items()) {
      if (!value.is_string()) throw fail("raw_attrs values must be strings");
      item.raw_attrs[key] = value.get<std::string>();
    }
  }
  return item;
}

}  // namespace

std::string items_to_jsonl(const std::vector<Item>& items) {
  std::string out;
  for (const auto& item : items) {
    out += item_to_json(item).dump();
    out += "\n";
  }
  return out;
}

std::vector<Item> load_items(const std::filesystem::path& path) {
  std::vector<Item> items;
  std::set<std::string> seen;
  io::for_each_line(path, [&](size_t line_no, const std::string& line) {
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
    Item item = item_from_json(j, line_no);
    if (!seen.insert(item.item_id).second) {
      throw ValidationError("line " + std::to_string(line_no) + ": duplicate item_id: " +
                            item.item_id);
    }
    items.push_back(std::move(item));
  });
  return items;
}

void save_items(const std::filesystem::path& path, const std::vector<Item>& items) {
  io::atomic_write_file(path, items_to_jsonl(items));
}

std::vector<LabeledPair> load_labeled_pairs(const std::filesystem::path& path) {
  std::vector<LabeledPair> pairs;
  std::map<std::pair<std::string, std::string>, bool> seen;
  io::for_each_line(path, [&](size_t line_no, const std::string& line) {
    auto fail = [&](const std::string& msg) -> ValidationError {
      return ValidationError("line " + std::to_string(line_no) + ": " + msg);
    };
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw fail(e.what());
    }
    if (!j.is_object() || !j.contains("item_a") || !j.contains("item_b") ||
        !j.contains("is_duplicate")) {
      throw fail("expected item_a, item_b, is_duplicate");
    }
    if (!j["item_a"].is_string() || !j["item_b"].is_string() || !j["is_duplicate"].is_boolean()) {
      throw fail("bad field types");
    }
    LabeledPair p{j["item_a"].get<std::string>(), j["item_b"].get<std::string>(),
                  j["is_duplicate"].get<bool>()};
    if (p.item_a == p.item_b) throw fail("self pair: " + p.item_a);
    if (p.item_b < p.item_a) std::swap(p.item_a, p.item_b);
    auto key = std::make_pair(p.item_a, p.item_b);
    auto it = seen.find(key);
    if (it != seen.end()) {
      if (it->second != p.is_duplicate) {
        throw fail("contradictory label for pair (" + p.item_a + ", " + p.item_b + ")");
      }
      return;  // exact duplicate line, keep first
    }
    seen.emplace(key, p.is_duplicate);
    pairs.push_back(std::move(p));
  });
  return pairs;
}

void save_labeled_pairs(const std::filesystem::path& path, const std::vector<LabeledPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    json j;
    j["item_a"] = p.item_a;
    j["item_b"] = p.item_b;
    j["is_duplicate"] = p.is_duplicate;
    out += j.dump();
    out += "\n";
  }
  io::atomic_write_file(path, out);
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw ValidationError("manifest " + path.string() + ": " + e.what());
  }
  CorpusManifest m;
  if (!j.contains("schema") || !j["schema"].contains("dims")) {
    throw ValidationError("manifest missing schema.dims");
  }
  for (const auto& d : j["schema"]["dims"]) {
    DimKind kind = d.at("kind").get<std::string>() == "numeric" ? DimKind::numeric
                                                                : DimKind::textual;
    m.schema.dims.push_back({d.at("name").get<std::string>(), kind});
  }
  m.schema.validate();
  m.q_max = j.value("q_max", 100.0);
  if (!(m.q_max >= 1.0)) throw ValidationError("manifest q_max must be >= 1");
  m.seed = j.value("seed", uint64_t{0});
  m.n_groups = j.value("n_groups", size_t{0});
  m.items_per_group = j.value("items_per_group", size_t{0});
  m.n_confounder_pairs = j.value("n_confounder_pairs", size_t{0});
  return m;
}

void save_manifest(const std::filesystem::path& path, const CorpusManifest& manifest) {
  json dims = json::array();
  for (const auto& d : manifest.schema.dims) {
    dims.push_back({{"name", d.name}, {"kind", d.kind == DimKind::numeric ? "numeric" : "textual"}});
  }
  json j;
  j["schema"] = {{"dims", dims}};
  j["q_max"] = manifest.q_max;
  j["seed"] = manifest.seed;
  j["n_groups"] = manifest.n_groups;
  j["items_per_group"] = manifest.items_per_group;
  j["n_confounder_pairs"] = manifest.n_confounder_pairs;
  io::atomic_write_file(path, j.dump(2) + "\n");
}

}  // namespace fitrep::corpus

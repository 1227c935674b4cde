#include "parasink/event_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "parasink/errors.hpp"

namespace parasink {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  return splitmix64(splitmix64(splitmix64(a) ^ b) ^ c);
}

}  // namespace

std::string_view to_string(Tier tier) {
  switch (tier) {
    case Tier::Reco: return "RECO";
    case Tier::Aod: return "AOD";
    case Tier::MiniAod: return "MINIAOD";
  }
  return "?";
}

Tier parse_tier(std::string_view text) {
  if (text == "RECO") return Tier::Reco;
  if (text == "AOD") return Tier::Aod;
  if (text == "MINIAOD") return Tier::MiniAod;
  throw ValidationError("tier: unknown value '" + std::string(text) + "'");
}

const Product* Event::find(std::string_view name) const {
  for (const auto& p : products) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

void WorkloadProfile::validate() const {
  if (schemas.empty()) throw ValidationError("schemas: must not be empty");
  std::set<std::string_view> seen;
  for (std::size_t i = 0; i < schemas.size(); ++i) {
    const auto& s = schemas[i];
    const auto where = "schemas[" + std::to_string(i) + "]";
    if (s.name.empty()) throw ValidationError(where + ".name: must not be empty");
    if (!seen.insert(s.name).second) throw ValidationError(where + ".name: duplicate product '" + s.name + "'");
    if (s.size.mean_bytes < 1) throw ValidationError(where + ".mean_bytes: must be >= 1");
    if (!(s.size.dispersion >= 0.0) || !std::isfinite(s.size.dispersion)) {
      throw ValidationError(where + ".dispersion: must be a finite non-negative number");
    }
    if (!(s.compressibility >= 0.0 && s.compressibility <= 1.0)) {
      throw ValidationError(where + ".compressibility: must lie in [0,1]");
    }
  }
}

WorkloadProfile WorkloadProfile::restricted_to(const std::vector<Tier>& tiers) const {
  WorkloadProfile out = *this;
  std::erase_if(out.schemas, [&](const ProductSchema& s) {
    return std::find(tiers.begin(), tiers.end(), s.tier) == tiers.end();
  });
  return out;
}

std::vector<std::string> WorkloadProfile::product_names(std::optional<Tier> tier) const {
  std::vector<std::string> names;
  for (const auto& s : schemas) {
    if (!tier || s.tier == *tier) names.push_back(s.name);
  }
  return names;
}

WorkloadProfile profile_from_config(const KeyValueConfig& config) {
  WorkloadProfile profile;
  if (config.contains("events_total")) profile.events_total = config.get_uint("events_total");
  if (config.contains("seed")) profile.seed = config.get_uint("seed");
  if (config.contains("cpu_work_per_event")) profile.cpu_work_per_event = config.get_uint("cpu_work_per_event");

  const auto n = config.list_size("schemas");
  for (std::size_t i = 0; i < n; ++i) {
    const auto key = "schemas[" + std::to_string(i) + "].";
    ProductSchema schema;
    schema.name = config.get_string(key + "name");
    if (auto t = config.get(key + "tier")) schema.tier = parse_tier(*t);
    if (config.contains(key + "mean_bytes")) schema.size.mean_bytes = config.get_uint(key + "mean_bytes");
    if (config.contains(key + "dispersion")) schema.size.dispersion = config.get_double(key + "dispersion");
    if (config.contains(key + "compressibility")) schema.compressibility = config.get_double(key + "compressibility");
    const auto count = config.contains(key + "count") ? config.get_uint(key + "count") : 0;
    if (count == 0) {
      profile.schemas.push_back(std::move(schema));
    } else {
      for (std::uint64_t k = 0; k < count; ++k) {
        auto copy = schema;
        copy.name = schema.name + "_" + std::to_string(k);
        profile.schemas.push_back(std::move(copy));
      }
    }
  }
  profile.validate();
  return profile;
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

EventGenerator::EventGenerator(WorkloadProfile profile) : profile_(std::move(profile)) {
  profile_.validate();
  name_hashes_.reserve(profile_.schemas.size());
  patterns_.reserve(profile_.schemas.size());
  for (const auto& s : profile_.schemas) {
    const auto h = fnv1a(s.name);
    name_hashes_.push_back(h);
    std::mt19937_64 rng(mix(profile_.seed, h, 0x5041545445524eull));
    std::array<std::uint8_t, 64> pattern{};
    for (std::size_t i = 0; i < pattern.size(); i += 8) {
      const auto word = rng();
      std::memcpy(pattern.data() + i, &word, 8);
    }
    patterns_.push_back(pattern);
  }
}

std::size_t EventGenerator::payload_length(std::uint64_t event_id, std::size_t product_index) const {
  const auto& schema = profile_.schemas.at(product_index);
  const double mean = static_cast<double>(schema.size.mean_bytes);
  const double sigma = schema.size.dispersion;
  if (sigma == 0.0) return schema.size.mean_bytes;
  std::mt19937_64 rng(mix(profile_.seed, event_id, name_hashes_[product_index] ^ 0x4c454eull));
  std::normal_distribution<double> normal(0.0, 1.0);
  // Log-normal with E[X] = mean.
  const double mu = std::log(mean) - 0.5 * sigma * sigma;
  const double drawn = std::exp(mu + sigma * normal(rng));
  const double upper = 16.0 * mean;
  return static_cast<std::size_t>(std::llround(std::clamp(drawn, 1.0, upper)));
}

Bytes EventGenerator::payload(std::uint64_t event_id, std::size_t product_index) const {
  const auto& schema = profile_.schemas.at(product_index);
  const auto length = payload_length(event_id, product_index);
  const auto low_entropy =
      static_cast<std::size_t>(std::llround(schema.compressibility * static_cast<double>(length)));

  Bytes out(length);
  const auto& pattern = patterns_[product_index];
  for (std::size_t i = 0; i < low_entropy; ++i) out[i] = pattern[i % pattern.size()];

  std::mt19937_64 rng(mix(profile_.seed, event_id, name_hashes_[product_index]));
  std::size_t i = low_entropy;
  for (; i + 8 <= length; i += 8) {
    const auto word = rng();
    std::memcpy(out.data() + i, &word, 8);
  }
  if (i < length) {
    const auto word = rng();
    std::memcpy(out.data() + i, &word, length - i);
  }
  return out;
}

Event EventGenerator::make_skeleton(std::uint64_t event_id) const {
  Event event;
  event.id = event_id;
  event.products.reserve(profile_.schemas.size());
  for (const auto& s : profile_.schemas) event.products.push_back(Product{s.name, {}});
  return event;
}

void EventGenerator::fill_product(Event& event, std::size_t product_index) const {
  event.products.at(product_index).payload = payload(event.id, product_index);
}

Event EventGenerator::make_event(std::uint64_t event_id) const {
  auto event = make_skeleton(event_id);
  for (std::size_t i = 0; i < product_count(); ++i) fill_product(event, i);
  return event;
}

std::vector<Event> generate_events(const WorkloadProfile& profile) {
  EventGenerator generator(profile);
  std::vector<Event> events;
  events.reserve(profile.events_total);
  for (std::uint64_t id = 0; id < profile.events_total; ++id) events.push_back(generator.make_event(id));
  return events;
}

std::uint64_t burn_cpu(std::uint64_t work_units, std::uint64_t salt) {
  std::uint64_t x = salt | 1;
  for (std::uint64_t i = 0; i < work_units; ++i) {
    x = x * 6364136223846793005ull + 1442695040888963407ull;
    x ^= x >> 29;
  }
  return x;
}

}  // namespace parasink

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "parasink/bytes.hpp"
#include "parasink/config.hpp"

namespace parasink {

/// Output-tier analogue of a product.
enum class Tier { Reco, Aod, MiniAod };

std::string_view to_string(Tier tier);
Tier parse_tier(std::string_view text);

struct SizeDistribution {
  std::uint64_t mean_bytes = 1;
  /// Sigma of the underlying normal of the log-normal size law.
  double dispersion = 0.0;
};

struct ProductSchema {
  std::string name;
  Tier tier = Tier::Reco;
  SizeDistribution size;
  /// Fraction of each payload taken from the low-entropy pattern.
  double compressibility = 0.0;
};

struct Product {
  std::string name;
  Bytes payload;
};

/// One unit of work. Products are kept in schema order; lookups by name are linear.
struct Event {
  std::uint64_t id = 0;
  std::vector<Product> products;

  const Product* find(std::string_view name) const;
};

struct WorkloadProfile {
  std::vector<ProductSchema> schemas;
  std::uint64_t events_total = 1;
  std::uint64_t seed = 0;
  /// Busy-loop iterations spent by producers per event.
  std::uint64_t cpu_work_per_event = 0;

  /// Throws ValidationError naming the offending field.
  void validate() const;

  /// Subset of the profile containing only products of the given tiers.
  WorkloadProfile restricted_to(const std::vector<Tier>& tiers) const;

  std::vector<std::string> product_names(std::optional<Tier> tier = std::nullopt) const;
};

/// Reads `events_total`, `seed`, `cpu_work_per_event` and `schemas[i].{name,tier,mean_bytes,
/// dispersion,compressibility,count}`. `count = N` expands one entry into N products named
/// `<name>_<k>`.
WorkloadProfile profile_from_config(const KeyValueConfig& config);

/// Deterministic synthetic event source. Immutable after construction and safe to share.
class EventGenerator {
 public:
  explicit EventGenerator(WorkloadProfile profile);

  const WorkloadProfile& profile() const noexcept { return profile_; }
  std::size_t product_count() const noexcept { return profile_.schemas.size(); }
  std::uint64_t events_total() const noexcept { return profile_.events_total; }

  /// Payload of one product; pure in (seed, event_id, product name).
  Bytes payload(std::uint64_t event_id, std::size_t product_index) const;

  /// Event with every product filled.
  Event make_event(std::uint64_t event_id) const;

  /// Event with names laid out and empty payloads, for filling product by product.
  Event make_skeleton(std::uint64_t event_id) const;

  void fill_product(Event& event, std::size_t product_index) const;

  /// Length drawn from the size law for one (event, product).
  std::size_t payload_length(std::uint64_t event_id, std::size_t product_index) const;

 private:
  WorkloadProfile profile_;
  std::vector<std::uint64_t> name_hashes_;
  std::vector<std::array<std::uint8_t, 64>> patterns_;
};

/// Whole stream as a vector; convenient for tests and small runs.
std::vector<Event> generate_events(const WorkloadProfile& profile);

/// Deterministic CPU burn; returns a value so the loop cannot be elided.
std::uint64_t burn_cpu(std::uint64_t work_units, std::uint64_t salt = 0);

std::uint64_t fnv1a(std::string_view text);

}  // namespace parasink

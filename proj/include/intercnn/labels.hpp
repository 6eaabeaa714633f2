#pragma once

#include <array>
#include <cstddef>
#include <string>

namespace icnn {

enum class Behavior : int {
  NormalDriving = 0,
  Texting = 1,
  Eating = 2,
  Talking = 3,
  Searching = 4,
  Drinking = 5,
  WatchingVideo = 6,
  Gaming = 7,
  Preparing = 8,
};

enum class AggregatedBehavior : int {
  NormalDriving = 0,
  UsingPhone = 1,
  EatAndDrink = 2,
  Talking = 3,
  Preparing = 4,
};

inline constexpr std::size_t kBehaviorCount = 9;
inline constexpr std::size_t kAggregatedCount = 5;

const char* behavior_name(Behavior b);
const char* aggregated_name(AggregatedBehavior a);

/// Throws InvalidLabel for ids outside 0..8.
Behavior behavior_from_id(int id);

/// Texting, Searching, WatchingVideo and Gaming become UsingPhone; Eating and
/// Drinking become EatAndDrink; the rest map to their namesakes.
AggregatedBehavior aggregate_label(Behavior b);
int aggregate_label_id(int behavior_id);

}  // namespace icnn

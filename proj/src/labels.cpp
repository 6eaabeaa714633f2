#include "intercnn/labels.hpp"

#include "intercnn/error.hpp"

namespace icnn {

const char* behavior_name(Behavior b) {
  static constexpr std::array<const char*, kBehaviorCount> names = {
      "NormalDriving", "Texting", "Eating", "Talking", "Searching", "Drinking", "WatchingVideo", "Gaming", "Preparing"};
  return names.at(static_cast<std::size_t>(b));
}

const char* aggregated_name(AggregatedBehavior a) {
  static constexpr std::array<const char*, kAggregatedCount> names = {"NormalDriving", "UsingPhone", "EatAndDrink",
                                                                      "Talking", "Preparing"};
  return names.at(static_cast<std::size_t>(a));
}

Behavior behavior_from_id(int id) {
  if (id < 0 || id >= static_cast<int>(kBehaviorCount))
    fail(ErrorKind::InvalidLabel, "behavior id " + std::to_string(id) + " outside 0..8");
  return static_cast<Behavior>(id);
}

AggregatedBehavior aggregate_label(Behavior b) {
  switch (b) {
    case Behavior::NormalDriving: return AggregatedBehavior::NormalDriving;
    case Behavior::Texting:
    case Behavior::Searching:
    case Behavior::WatchingVideo:
    case Behavior::Gaming: return AggregatedBehavior::UsingPhone;
    case Behavior::Eating:
    case Behavior::Drinking: return AggregatedBehavior::EatAndDrink;
    case Behavior::Talking: return AggregatedBehavior::Talking;
    case Behavior::Preparing: return AggregatedBehavior::Preparing;
  }
  fail(ErrorKind::InvalidLabel, "unknown behavior");
}

int aggregate_label_id(int behavior_id) { return static_cast<int>(aggregate_label(behavior_from_id(behavior_id))); }

}  // namespace icnn

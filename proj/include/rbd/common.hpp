#pragma once

#include <stdexcept>
#include <string>

namespace rbd {

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPi = 3.14159265358979323846;

// error categories surfaced to callers; all carry a human-readable message
struct config_error : std::runtime_error { using std::runtime_error::runtime_error; };
struct shape_error : std::runtime_error { using std::runtime_error::runtime_error; };
struct format_error : std::runtime_error { using std::runtime_error::runtime_error; };
struct ordering_error : std::runtime_error { using std::runtime_error::runtime_error; };
struct training_error : std::runtime_error { using std::runtime_error::runtime_error; };
struct dataset_error : std::runtime_error { using std::runtime_error::runtime_error; };
struct generation_error : std::runtime_error { using std::runtime_error::runtime_error; };

// behavior classes and their fixed label values
enum class behavior : int {
    other = 0,
    walking = 1,
    falling = 2,
    swing = 3,
    seizure = 4,
    restless = 5,
};

inline constexpr int kNumBehaviors = 6;

inline const char* behavior_name(behavior b) {
    switch (b) {
        case behavior::other: return "other";
        case behavior::walking: return "walking";
        case behavior::falling: return "falling";
        case behavior::swing: return "swing";
        case behavior::seizure: return "seizure";
        case behavior::restless: return "restless";
    }
    return "?";
}

inline behavior behavior_from_name(const std::string& name) {
    for (int i = 0; i < kNumBehaviors; ++i) {
        behavior b = static_cast<behavior>(i);
        if (name == behavior_name(b)) return b;
    }
    throw config_error("unknown behavior name: " + name);
}

}  // namespace rbd

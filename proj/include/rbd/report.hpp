#pragma once

#include <array>
#include <iomanip>
#include <ostream>

#include "rbd/common.hpp"

namespace rbd {

// per-class counts, confusion matrix (rows = truth, cols = predicted),
// and overall inference accuracy = correct predictions / total predictions
struct eval_report {
    std::array<std::array<long, kNumBehaviors>, kNumBehaviors> confusion{};
    long total = 0;
    long correct = 0;

    void add(behavior truth, behavior predicted) {
        confusion[static_cast<int>(truth)][static_cast<int>(predicted)] += 1;
        total += 1;
        if (truth == predicted) correct += 1;
    }

    long class_count(int truth) const {
        long n = 0;
        for (long c : confusion[truth]) n += c;
        return n;
    }

    double accuracy() const { return total > 0 ? static_cast<double>(correct) / total : 0.0; }

    double class_accuracy(int truth) const {
        long n = class_count(truth);
        return n > 0 ? static_cast<double>(confusion[truth][truth]) / n : 0.0;
    }

    void print(std::ostream& os) const {
        os << "behavior            samples   accuracy\n";
        for (int c = 0; c < kNumBehaviors; ++c) {
            os << "  " << std::left << std::setw(18) << behavior_name(static_cast<behavior>(c))
               << std::right << std::setw(7) << class_count(c) << "   " << std::fixed
               << std::setprecision(2) << 100.0 * class_accuracy(c) << "%\n";
        }
        os << "overall accuracy: " << std::fixed << std::setprecision(2) << 100.0 * accuracy()
           << "% (" << correct << "/" << total << ")\n";
        os << "confusion matrix (rows = truth, cols = predicted):\n";
        for (int t = 0; t < kNumBehaviors; ++t) {
            os << "  ";
            for (int p = 0; p < kNumBehaviors; ++p) os << std::setw(7) << confusion[t][p];
            os << "\n";
        }
        os.unsetf(std::ios::fixed);
    }

    void to_csv(std::ostream& os) const {
        os << "truth";
        for (int p = 0; p < kNumBehaviors; ++p)
            os << "," << behavior_name(static_cast<behavior>(p));
        os << ",samples,accuracy\n";
        for (int t = 0; t < kNumBehaviors; ++t) {
            os << behavior_name(static_cast<behavior>(t));
            for (int p = 0; p < kNumBehaviors; ++p) os << "," << confusion[t][p];
            os << "," << class_count(t) << "," << class_accuracy(t) << "\n";
        }
        os << "overall,,,,,,," << total << "," << accuracy() << "\n";
    }
};

}  // namespace rbd

#pragma once

// Retransmission timeout estimation (SRTT / RTTVAR, Jacobson-Karels).

#include <algorithm>

#include "cats/errors.hpp"
#include "cats/sim.hpp"

namespace cats {

struct RtoBounds {
  SimTime min_rto = 200ms;
  SimTime max_rto = 60s;
  SimTime granularity = 1ms;
  SimTime initial_rto = 1s;
};

struct RttEstimator {
  SimTime srtt{0};
  SimTime rttvar{0};
  SimTime rto{1s};
  bool initialized = false;

  static RttEstimator fresh(const RtoBounds& b) {
    RttEstimator e;
    e.rto = std::clamp(b.initial_rto, b.min_rto, b.max_rto);
    return e;
  }
};

inline RttEstimator rto_update(RttEstimator e, SimTime sample, const RtoBounds& b) {
  if (sample <= SimTime{0}) throw UsageError("rtt sample must be positive");
  if (!e.initialized) {
    e.srtt = sample;
    e.rttvar = sample / 2;
    e.initialized = true;
  } else {
    const SimTime err = e.srtt > sample ? e.srtt - sample : sample - e.srtt;
    // 3/4 and 7/8 weights in integer nanoseconds; truncation is sub-ns.
    e.rttvar = (3 * e.rttvar + err) / 4;
    e.srtt = (7 * e.srtt + sample) / 8;
  }
  e.rto = std::clamp(e.srtt + std::max(b.granularity, 4 * e.rttvar), b.min_rto, b.max_rto);
  return e;
}

// Timer expiry doubles the timeout, capped at max_rto.
inline RttEstimator rto_backoff(RttEstimator e, const RtoBounds& b) {
  e.rto = std::min(2 * e.rto, b.max_rto);
  return e;
}

}  // namespace cats

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "coloc/fusion.hpp"
#include "coloc/local_filter.hpp"
#include "coloc/motion.hpp"
#include "coloc/types.hpp"

namespace coloc {

/// Measurement hand-off: the tuple (z, R, kind, observer belief).
struct MeasRequestPayload {
  RelativeMeasurement meas;
  Belief observer_belief;
};

struct BeliefReplyPayload {
  Belief target_belief;
  AgentId observer = 0;  // which request this answers
};

struct Message {
  AgentId from = 0;
  AgentId to = 0;
  int stamp = 0;
  std::variant<MeasRequestPayload, BeliefReplyPayload> payload;

  bool is_request() const { return payload.index() == 0; }
};

/// Approximate serialized size, for communication-cost accounting.
std::size_t message_wire_bytes(const Message& msg);

/// One line of the exported message trace.
struct MessageRecord {
  int stamp = 0;
  AgentId from = 0;
  AgentId to = 0;
  std::string variant;
  std::size_t bytes = 0;
};

struct AgentConfig {
  FusionMethod method = FusionMethod::Dmv;
  FusionConfig fusion;
  bool fusion_enabled = true;  // false: serve replies but never self-update
  NoiseModel noise;
  ProcessNoise process_noise;
};

/// Per-agent state. An agent only ever reads its own belief; partner state
/// arrives through messages.
struct AgentRuntime {
  AgentId id = 0;
  Belief belief;
  Belief step_prior;  // snapshot exchanged during the current step
  AgentConfig config;
};

struct AbsoluteEvent {
  AgentId agent = 0;
  Landmark landmark;
  double z = 0.0;
  double r_std = 0.0;
};

struct StepEvents {
  std::vector<AbsoluteEvent> absolute;
  std::vector<RelativeMeasurement> relative;
};

/// Prediction, scheduled absolute corrections, then one MeasRequest per own
/// relative measurement. Sets the step snapshot used for all exchanges.
std::vector<Message> step_agent(AgentRuntime& rt, const UnicycleInput& u,
                                const StepEvents& own_events, int t);

/// Target side of an exchange: replies with the step snapshot, then applies
/// its own update from the received tuple when fusion is enabled.
Message serve_measurement(AgentRuntime& rt, const Message& request);

struct StepResult {
  std::vector<MessageRecord> messages;
  int processed_relative = 0;
  int dropped_events = 0;
};

/// Pairwise same-step delivery of a batch of requests: serves each target and
/// folds the observers' updates from the returned replies.
StepResult route_messages(std::vector<AgentRuntime>& world, std::vector<Message> requests,
                          int t);

/// One synchronized step for every agent: predict + absolute phase, then the
/// relative-measurement exchange. Events are processed in (observer, target)
/// id order; an agent folds its target-role updates first, then its own
/// measurements in target-id order.
StepResult step_world(std::vector<AgentRuntime>& world,
                      const std::vector<UnicycleInput>& inputs, const StepEvents& events,
                      int t);

}  // namespace coloc

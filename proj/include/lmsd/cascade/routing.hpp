#pragma once
// Hard-threshold routing and assembly of the (N+1)-way diagnosis.
//
// The healthy path yields p_D = e_0 and the anomalous path yields
// p_D = [0, softmax(z_FC)]. Both are built directly instead of through a
// softmax over -inf sentinels, so the masked mass is exactly zero with no
// reliance on exp underflow. z_D still carries the sentinels for audit.

#include "lmsd/core/tensor.hpp"
#include "lmsd/nn/model.hpp"

#include <functional>
#include <limits>
#include <optional>

namespace lmsd::cascade {

enum class Path { healthy, anomalous };

inline const char* to_string(Path p) { return p == Path::healthy ? "healthy" : "anomalous"; }

struct RoutingDecision {
  Path path = Path::anomalous;
  double z_h = 0.0;
  double z_a = 0.0;
};

struct DiagnosisOutput {
  Vec z_ad;                 // [z_h, z_a]
  Vec p_ad;
  RoutingDecision routing;
  std::optional<Vec> z_fc;  // absent on the healthy path
  Vec z_d;                  // N+1, masked entries = -inf
  Vec p_d;                  // N+1

  int predicted() const { return nn::argmax(p_d); }
};

/// Optional extension: route anomalous iff p_a >= threshold. Unset means the
/// plain logit comparison z_a >= z_h.
struct RoutingOptions {
  std::optional<double> anomaly_threshold;
};

inline RoutingDecision route(const Vec& z_ad, const RoutingOptions& opt = {}) {
  require(z_ad.size() == 2, "route: z_AD must have length 2, got " + std::to_string(z_ad.size()));
  require(z_ad.allFinite(), "route: non-finite AD logits");
  RoutingDecision r{Path::anomalous, z_ad(0), z_ad(1)};
  if (opt.anomaly_threshold) {
    const double p_a = softmax(z_ad)(1);
    r.path = p_a >= *opt.anomaly_threshold ? Path::anomalous : Path::healthy;
  } else {
    r.path = r.z_h > r.z_a ? Path::healthy : Path::anomalous;  // ties route anomalous
  }
  return r;
}

/// Error raised when the fault stage fails for a flight.
class FaultStageError : public Error {
 public:
  FaultStageError(const std::string& flight_id, const std::string& what)
      : Error("flight " + flight_id + ": fault stage failed: " + what), flight_id_(flight_id) {}
  const std::string& flight_id() const { return flight_id_; }

 private:
  std::string flight_id_;
};

using FcProvider = std::function<Vec()>;

/// `fc_provider` is invoked only on the anomalous path.
inline DiagnosisOutput route_and_assemble(const Vec& z_ad, const FcProvider& fc_provider, int n_faults,
                                          const std::string& flight_id = "", const RoutingOptions& opt = {}) {
  require(n_faults >= 1, "route_and_assemble: need at least one fault class");
  DiagnosisOutput out;
  out.routing = route(z_ad, opt);
  out.z_ad = z_ad;
  out.p_ad = softmax(z_ad);
  const double neg_inf = -std::numeric_limits<double>::infinity();
  out.z_d = Vec::Constant(n_faults + 1, neg_inf);
  out.p_d = Vec::Zero(n_faults + 1);
  if (out.routing.path == Path::healthy) {
    out.z_d(0) = out.routing.z_h;
    out.p_d(0) = 1.0;
    return out;
  }
  Vec z_fc;
  try {
    z_fc = fc_provider();
  } catch (const std::exception& e) {
    throw FaultStageError(flight_id, e.what());
  }
  if (z_fc.size() != n_faults)
    throw FaultStageError(flight_id, "expected " + std::to_string(n_faults) + " fault logits, got " +
                                         std::to_string(z_fc.size()));
  if (!z_fc.allFinite()) throw FaultStageError(flight_id, "non-finite fault logits");
  out.z_d.tail(n_faults) = z_fc;
  out.p_d.tail(n_faults) = softmax(z_fc);
  out.z_fc = std::move(z_fc);
  return out;
}

/// Frozen two-stage inference. Both models must be in evaluation mode.
inline DiagnosisOutput diagnose(const Mat& x, const nn::Model& health, const nn::Model& fault,
                                const std::string& flight_id = "", const RoutingOptions& opt = {}) {
  require(!health.training() && !fault.training(), "diagnose: stage models must be in evaluation mode");
  require(health.config().head_dim == 2, "diagnose: health model must have 2 outputs");
  const auto& hc = health.config();
  const auto& fc = fault.config();
  require(x.rows() == hc.input_len && x.cols() == hc.input_dim && x.rows() == fc.input_len &&
              x.cols() == fc.input_dim,
          "diagnose: flight " + flight_id + " is " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
              ", models expect " + std::to_string(hc.input_len) + "x" + std::to_string(hc.input_dim));
  const Vec z_ad = health.infer(x).logits;
  return route_and_assemble(z_ad, [&] { return fault.infer(x).logits; }, fc.head_dim, flight_id, opt);
}

}  // namespace lmsd::cascade

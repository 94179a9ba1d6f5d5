// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DARTer Authors.

#include "darter/dfa.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include "darter/errors.hpp"
#include "darter/rng.hpp"

namespace darter {

Gate::Gate(const std::string& name, int width)
    : linear_weight(name + ".linear.weight", ad::Matrix::Zero(width, 1)),
      linear_bias(name + ".linear.bias", ad::Matrix::Zero(1, 1)),
      conv_kernel(name + ".conv.kernel", ad::Matrix::Zero(1, 3)),
      conv_bias(name + ".conv.bias", ad::Matrix::Zero(1, 1)) {}

void Gate::Visit(const nn::ParameterVisitor& fn) {
  fn(linear_weight);
  fn(linear_bias);
  fn(conv_kernel);
  fn(conv_bias);
}

GateParams::GateParams(int num_tokens, int width, int depth, uint64_t seed,
                       double beta_)
    : v(1, num_tokens), beta(beta_) {
  Rng rng(seed);
  for (int j = 0; j < num_tokens; ++j) v(0, j) = rng.Normal();
  for (int layer = 2; layer <= depth; ++layer) {
    gates.emplace_back("dfa.gate" + std::to_string(layer), width);
  }
}

void GateParams::Visit(const nn::ParameterVisitor& fn) {
  for (Gate& g : gates) g.Visit(fn);
}

ad::Var GateProbability(ad::Tape& tape, ad::Var prev_tokens,
                        const ad::Matrix& v, Gate& gate) {
  if (prev_tokens.rows() != v.cols()) {
    throw Error(ErrorKind::kShape,
                "gate expects " + std::to_string(v.cols()) + " tokens, got " +
                    std::to_string(prev_tokens.rows()));
  }
  if (prev_tokens.cols() != gate.linear_weight.value.rows()) {
    throw Error(ErrorKind::kShape, "gate width mismatch");
  }
  ad::Var r = ad::MatMul(tape.Constant(v), prev_tokens);  // 1 x d
  ad::Var linear = ad::Add(ad::MatMul(r, tape.Param(gate.linear_weight)),
                           tape.Param(gate.linear_bias));
  ad::Var conv = ad::Add(ad::Mean(ad::Conv1dSame3(r, tape.Param(gate.conv_kernel))),
                         tape.Param(gate.conv_bias));
  return ad::HalfTanh(ad::Add(linear, conv));
}

GateDecision Decide(double p, double beta) {
  return p > beta ? GateDecision::kExecute : GateDecision::kSkip;
}

int ActivationTrace::executed_count() const {
  int n = 0;
  for (const LayerRecord& r : layers) n += r.executed ? 1 : 0;
  return n;
}

void WriteTraceLines(std::ostream& out, int frame_index,
                     const ActivationTrace& trace) {
  for (const LayerRecord& r : trace.layers) {
    out << frame_index << ',' << r.layer << ',';
    if (r.prob.has_value()) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.17g", *r.prob);
      out << buf;
    } else {
      out << "always-on";
    }
    out << ',' << (r.executed ? 1 : 0) << '\n';
  }
}

std::vector<FrameTrace> ReadTraceLines(std::istream& in) {
  std::vector<FrameTrace> frames;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& why) {
    throw Error(ErrorKind::kParse,
                "trace line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 4) fail("expected 4 fields");
    LayerRecord record;
    int frame = 0;
    try {
      size_t pos = 0;
      frame = std::stoi(fields[0], &pos);
      if (pos != fields[0].size()) fail("bad frame index");
      record.layer = std::stoi(fields[1], &pos);
      if (pos != fields[1].size()) fail("bad layer index");
    } catch (const std::logic_error&) {
      fail("bad integer field");
    }
    if (fields[2] != "always-on") {
      double p = 0.0;
      const auto [ptr, ec] = std::from_chars(
          fields[2].data(), fields[2].data() + fields[2].size(), p);
      if (ec != std::errc() || ptr != fields[2].data() + fields[2].size()) {
        fail("bad probability");
      }
      record.prob = p;
    }
    if (fields[3] != "0" && fields[3] != "1") fail("executed must be 0 or 1");
    record.executed = fields[3] == "1";
    if (frames.empty() || frames.back().frame_index != frame) {
      frames.push_back(FrameTrace{frame, {}});
    }
    frames.back().trace.layers.push_back(record);
  }
  return frames;
}

}  // namespace darter

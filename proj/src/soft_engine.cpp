#include "glidr/soft_engine.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace glidr {

BodyWeights gather_weights(std::span<const RuleWeights> bodies) {
  if (bodies.empty()) throw std::invalid_argument("no rule bodies");
  BodyWeights out{bodies[0].schema, bodies[0].n_predicates, bodies.size(), {}};
  const auto S = out.schema.n_slots(), P = out.n_predicates, nb = out.n_bodies;
  out.w.resize(S * P * nb);
  std::vector<double> probs(P);
  for (std::size_t b = 0; b < nb; ++b) {
    if (!(bodies[b].schema == out.schema) || bodies[b].n_predicates != P)
      throw std::invalid_argument("rule bodies disagree on schema");
    for (std::size_t s = 0; s < S; ++s) {
      softargmax(bodies[b].slot_logits(s), probs);
      for (std::size_t k = 0; k < P; ++k) out.w[(s * P + k) * nb + b] = probs[k];
    }
  }
  return out;
}

namespace {

struct Layout {
  std::size_t E, Q, nb, L;
};

void mark_nonzero_rows(const std::vector<double>& a, const Layout& g, std::vector<char>& nz) {
  nz.assign(g.E, 0);
  for (std::size_t r = 0; r < g.E; ++r) {
    const double* row = a.data() + r * g.L;
    for (std::size_t l = 0; l < g.L; ++l)
      if (row[l] != 0.0) {
        nz[r] = 1;
        break;
      }
  }
}

// psi = clamp(sum_k w_k B_k phi + w_true); records where the clamp was active.
void emit_message(const AdjacencyTensor& B, const BodyWeights& W, std::size_t slot, Direction dir,
                  const std::vector<double>& phi, const std::vector<char>& src_nz,
                  const Layout& g, std::vector<double>& psi, std::vector<std::uint8_t>* mask) {
  psi.assign(g.E * g.L, 0.0);
  const bool fwd = dir == Direction::forward;
  for (const Edge& e : B.edges()) {
    const std::size_t s = fwd ? e.src : e.dst;
    const std::size_t d = fwd ? e.dst : e.src;
    if (!src_nz[s]) continue;
    const double* wk = W.at(slot, e.pred);
    const double* src = phi.data() + s * g.L;
    double* dst = psi.data() + d * g.L;
    for (std::size_t b = 0; b < g.nb; ++b) {
      const double wb = wk[b];
      if (wb == 0.0) continue;
      const double* sb = src + b * g.Q;
      double* db = dst + b * g.Q;
      for (std::size_t q = 0; q < g.Q; ++q) db[q] += wb * sb[q];
    }
  }
  const double* wt = W.at(slot, B.predicates().true_index());
  if (mask) mask->assign(g.E * g.L, 0);
  for (std::size_t r = 0; r < g.E; ++r) {
    double* row = psi.data() + r * g.L;
    for (std::size_t b = 0; b < g.nb; ++b) {
      for (std::size_t q = 0; q < g.Q; ++q) {
        double x = row[b * g.Q + q] + wt[b];
        if (x > 1.0) {
          x = 1.0;
          if (mask) (*mask)[r * g.L + b * g.Q + q] = 1;
        }
        row[b * g.Q + q] = x;
      }
    }
  }
}

}  // namespace

SoftBatchOutput run_soft_batch(const AdjacencyTensor& B, const BodyWeights& W,
                               std::span<const Query> queries, std::size_t r_max,
                               ForwardTrace* trace, bool keep_states) {
  if (W.n_predicates != B.num_predicates())
    throw std::invalid_argument("weights and adjacency tensor disagree on predicate count");
  if (r_max < 1) throw std::invalid_argument("r_max must be at least 1");
  const Layout g{B.num_entities(), queries.size(), W.n_bodies, queries.size() * W.n_bodies};
  const std::size_t N = W.schema.n_vars();
  for (const auto& q : queries)
    if (q.head >= g.E || q.tail >= g.E) throw std::out_of_range("query entity out of range");

  std::vector<std::vector<double>> phi(N);
  for (std::size_t v = 0; v < N; ++v) phi[v].assign(g.E * g.L, (v == 0 || v + 1 == N) ? 0.0 : 1.0);
  for (std::size_t b = 0; b < g.nb; ++b)
    for (std::size_t q = 0; q < g.Q; ++q) {
      phi[0][queries[q].head * g.L + b * g.Q + q] = 1.0;
      phi[N - 1][queries[q].tail * g.L + b * g.Q + q] = 1.0;
    }

  if (trace) {
    *trace = ForwardTrace{};
    trace->n_entities = g.E;
    trace->n_queries = g.Q;
    trace->n_bodies = g.nb;
    trace->n_vars = N;
  }

  std::vector<std::vector<double>> messages;  // reused storage, indexed per round
  std::vector<std::vector<std::uint32_t>> inbox(N);
  std::vector<std::vector<std::uint32_t>> inbox_global(N);
  std::vector<char> nz;
  std::uint32_t global_message = 0;

  for (std::size_t round = 0; round < r_max; ++round) {
    const Direction dir = round % 2 == 0 ? Direction::forward : Direction::backward;
    for (auto& in : inbox) in.clear();
    for (auto& in : inbox_global) in.clear();
    std::size_t used = 0;
    for (std::size_t t = 0; t < N; ++t) {
      const std::size_t v = dir == Direction::forward ? t : N - 1 - t;
      if (!inbox[v].empty()) {
        auto& state = phi[v];
        std::vector<std::uint8_t>* routing = nullptr;
        if (trace) {
          trace->routing.emplace_back(g.E * g.L, 0);
          routing = &trace->routing.back();
          ForwardTrace::Event ev{ForwardTrace::Kind::update, static_cast<std::uint32_t>(v), 0, 0,
                                 dir, static_cast<std::uint32_t>(trace->routing.size() - 1), 0,
                                 inbox_global[v]};
          trace->events.push_back(std::move(ev));
        }
        for (std::size_t a = 0; a < inbox[v].size(); ++a) {
          const auto& m = messages[inbox[v][a]];
          for (std::size_t idx = 0; idx < state.size(); ++idx) {
            if (m[idx] < state[idx]) {
              state[idx] = m[idx];
              if (routing) (*routing)[idx] = static_cast<std::uint8_t>(a + 1);
            }
          }
        }
      }
      const bool has_targets = dir == Direction::forward ? v + 1 < N : v > 0;
      if (!has_targets) continue;
      std::uint32_t snapshot = 0;
      if (trace) {
        trace->snapshots.push_back(phi[v]);
        snapshot = static_cast<std::uint32_t>(trace->snapshots.size() - 1);
      }
      mark_nonzero_rows(phi[v], g, nz);
      auto emit_to = [&](std::size_t u) {
        const std::size_t slot = W.schema.slot_index(v, u);
        if (messages.size() <= used) messages.emplace_back();
        std::vector<std::uint8_t>* mask = nullptr;
        if (trace) {
          trace->clamped.emplace_back();
          mask = &trace->clamped.back();
          trace->events.push_back(ForwardTrace::Event{
              ForwardTrace::Kind::emit, static_cast<std::uint32_t>(v),
              static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(slot), dir, snapshot,
              global_message, {}});
        }
        emit_message(B, W, slot, dir, phi[v], nz, g, messages[used], mask);
        inbox[u].push_back(static_cast<std::uint32_t>(used));
        inbox_global[u].push_back(global_message);
        ++used;
        ++global_message;
      };
      if (dir == Direction::forward) {
        for (std::size_t u = v + 1; u < N; ++u) emit_to(u);
      } else {
        for (std::size_t u = v; u-- > 0;) emit_to(u);
      }
    }
  }

  SoftBatchOutput out{g.Q, g.nb, std::vector<double>(g.L, 0.0), {}};
  std::vector<double> best(N * g.L, -1.0);
  std::vector<std::uint32_t> arg(N * g.L, 0);
  for (std::size_t v = 0; v < N; ++v)
    for (std::size_t l = 0; l < g.E; ++l) {
      const double* row = phi[v].data() + l * g.L;
      for (std::size_t lane = 0; lane < g.L; ++lane)
        if (row[lane] > best[v * g.L + lane]) {
          best[v * g.L + lane] = row[lane];
          arg[v * g.L + lane] = static_cast<std::uint32_t>(l);
        }
    }
  std::vector<std::uint32_t> argmin(g.L, 0);
  for (std::size_t lane = 0; lane < g.L; ++lane) {
    double y = std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < N; ++v)
      if (best[v * g.L + lane] < y) {
        y = best[v * g.L + lane];
        argmin[lane] = static_cast<std::uint32_t>(v);
      }
    out.scores[lane] = y;
  }
  if (trace) {
    trace->final_argmax = std::move(arg);
    trace->final_argmin = std::move(argmin);
  }
  if (keep_states) {
    out.final_states.reserve(N * g.E * g.L);
    for (const auto& p : phi) out.final_states.insert(out.final_states.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<double> backprop_trace(const ForwardTrace& tr, const AdjacencyTensor& B,
                                   const BodyWeights& W, std::span<const double> score_adjoint) {
  const Layout g{tr.n_entities, tr.n_queries, tr.n_bodies, tr.lanes()};
  if (score_adjoint.size() != g.L) throw std::invalid_argument("score adjoint size mismatch");
  if (W.n_bodies != g.nb || B.num_entities() != g.E || tr.n_vars != W.schema.n_vars())
    throw std::invalid_argument("trace does not match weights or adjacency tensor");
  const std::size_t N = tr.n_vars, P = W.n_predicates;
  const std::size_t true_k = B.predicates().true_index();

  std::vector<double> wbar(W.w.size(), 0.0);
  std::vector<std::vector<double>> phibar(N, std::vector<double>(g.E * g.L, 0.0));
  std::vector<std::vector<double>> msgbar(tr.clamped.size());

  for (std::size_t lane = 0; lane < g.L; ++lane) {
    const std::size_t v = tr.final_argmin[lane];
    const std::size_t l = tr.final_argmax[v * g.L + lane];
    phibar[v][l * g.L + lane] += score_adjoint[lane];
  }

  std::vector<char> nz;
  for (auto it = tr.events.rbegin(); it != tr.events.rend(); ++it) {
    const auto& ev = *it;
    if (ev.kind == ForwardTrace::Kind::update) {
      auto& gvar = phibar[ev.var];
      const auto& routing = tr.routing[ev.snapshot];
      for (std::size_t idx = 0; idx < gvar.size(); ++idx) {
        const auto a = routing[idx];
        if (a == 0 || gvar[idx] == 0.0) continue;
        auto& mb = msgbar[ev.inputs[a - 1]];
        if (mb.empty()) mb.assign(g.E * g.L, 0.0);
        mb[idx] += gvar[idx];
        gvar[idx] = 0.0;
      }
      continue;
    }
    auto& psibar = msgbar[ev.message];
    if (psibar.empty()) continue;
    const auto& mask = tr.clamped[ev.message];
    for (std::size_t idx = 0; idx < psibar.size(); ++idx)
      if (mask[idx]) psibar[idx] = 0.0;
    mark_nonzero_rows(psibar, g, nz);

    const auto& src_state = tr.snapshots[ev.snapshot];
    auto& src_bar = phibar[ev.var];
    const bool fwd = ev.dir == Direction::forward;
    double* wslot = wbar.data() + ev.slot * P * g.nb;
    for (const Edge& e : B.edges()) {
      const std::size_t s = fwd ? e.src : e.dst;
      const std::size_t d = fwd ? e.dst : e.src;
      if (!nz[d]) continue;
      const double* wk = W.at(ev.slot, e.pred);
      const double* pb = psibar.data() + d * g.L;
      const double* src = src_state.data() + s * g.L;
      double* sbar = src_bar.data() + s * g.L;
      double* acc = wslot + e.pred * g.nb;
      for (std::size_t b = 0; b < g.nb; ++b) {
        const double wb = wk[b];
        const double* pbb = pb + b * g.Q;
        const double* sb = src + b * g.Q;
        double* sbb = sbar + b * g.Q;
        double a = 0.0;
        for (std::size_t q = 0; q < g.Q; ++q) {
          a += pbb[q] * sb[q];
          sbb[q] += wb * pbb[q];
        }
        acc[b] += a;
      }
    }
    double* acc_true = wslot + true_k * g.nb;
    for (std::size_t d = 0; d < g.E; ++d) {
      if (!nz[d]) continue;
      const double* pb = psibar.data() + d * g.L;
      for (std::size_t b = 0; b < g.nb; ++b) {
        double a = 0.0;
        for (std::size_t q = 0; q < g.Q; ++q) a += pb[b * g.Q + q];
        acc_true[b] += a;
      }
    }
    std::vector<double>().swap(psibar);
  }
  return wbar;
}

}  // namespace glidr

#include "ssr/pseudolabel.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "ssr/rng.hpp"

namespace ssr::pseudo {

const char* status_name(Status s) {
  switch (s) {
    case Status::labeled: return "labeled";
    case Status::unlabeled: return "unlabeled";
    case Status::pseudo: return "pseudo";
  }
  return "?";
}

std::size_t LabelState::add(LabelEntry e) {
  if (find(e.key)) throw std::invalid_argument("label state: duplicate view " + e.key.object_id + "/" + std::to_string(e.key.view));
  entries_.push_back(std::move(e));
  return entries_.size() - 1;
}

std::size_t LabelState::add_labeled(ViewKey key, int class_index, int viewpoint) {
  return add({std::move(key), class_index, Status::labeled, viewpoint, std::nullopt, std::nullopt});
}

std::size_t LabelState::add_unlabeled(ViewKey key, int class_index) {
  return add({std::move(key), class_index, Status::unlabeled, std::nullopt, std::nullopt, std::nullopt});
}

void LabelState::set_pseudo(std::size_t i, int viewpoint, double confidence, int cycle) {
  auto& e = entries_.at(i);
  if (e.status == Status::labeled) throw std::logic_error("label state: labeled views are never relabeled");
  if (!(confidence > kConfidenceThreshold)) throw std::logic_error("label state: pseudo label below confidence threshold");
  e.status = Status::pseudo;
  e.viewpoint = viewpoint;
  e.confidence = confidence;
  e.cycle_assigned = cycle;
}

std::optional<std::size_t> LabelState::find(const ViewKey& key) const {
  // linear; states hold a few thousand views at most and lookups are rare
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].key == key) return i;
  return std::nullopt;
}

std::size_t LabelState::count(Status s) const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.status == s;
  return n;
}

double label_ratio(const LabelState& state) {
  const double p = state.count(Status::pseudo), u = state.count(Status::unlabeled);
  return p + u == 0 ? 0.0 : p / (p + u);
}

double pseudo_accuracy(const LabelState& state, const std::vector<int>& truth) {
  std::size_t n = 0, right = 0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    const auto& e = state[i];
    if (e.status != Status::pseudo) continue;
    if (i >= truth.size() || truth[i] < 0)
      throw std::invalid_argument("pseudo_accuracy: no ground truth for " + e.key.object_id + "/" + std::to_string(e.key.view));
    ++n;
    right += *e.viewpoint == truth[i];
  }
  return n == 0 ? 1.0 : double(right) / double(n);
}

std::vector<ProbePair> make_probe(const std::vector<ReferenceSet>& labeled, std::uint64_t seed, std::size_t n_pairs) {
  if (labeled.empty()) throw std::invalid_argument("probe: empty labeled pool");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labeled.size(); ++i) by_class[labeled[i].class_index].push_back(i);
  std::vector<std::vector<std::size_t>> groups;
  for (auto& [c, g] : by_class) groups.push_back(g);

  auto rng = substream(seed, "pseudo.probe");
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  std::vector<ProbePair> probe;
  for (std::size_t k = 0; k < n_pairs; ++k) {
    const auto& g = groups[pick(groups.size())];
    const auto& oa = labeled[g[pick(g.size())]];
    const std::size_t nv = oa.views.size();
    const std::size_t va = pick(nv);
    if (k % 2 == 0) {
      const ReferenceSet* ob = &oa;
      if (g.size() > 1)
        while (ob == &oa) ob = &labeled[g[pick(g.size())]];
      probe.push_back({oa.views[va], ob->views[va], true});
    } else {
      const auto& ob = labeled[g[pick(g.size())]];
      std::size_t vb = pick(nv - 1);
      if (vb >= va) ++vb;
      probe.push_back({oa.views[va], ob.views[vb], false});
    }
  }
  return probe;
}

double probe_accuracy(const siam::SiameseNet& net, const std::vector<ProbePair>& probe) {
  if (probe.empty()) return 1.0;
  std::vector<SilhouetteImage> a, b;
  for (const auto& p : probe) {
    a.push_back(p.a);
    b.push_back(p.b);
  }
  const auto ea = net.embed_all(a), eb = net.embed_all(b);
  std::size_t right = 0;
  for (std::size_t i = 0; i < probe.size(); ++i) right += (net.probability(ea[i], eb[i]) > 0.5) == probe[i].same;
  return double(right) / double(probe.size());
}

CycleReport run_cycle(LabelState& state, const std::vector<SilhouetteImage>& images, const std::vector<int>& truth,
                      const std::vector<ReferenceSet>& labeled, const siam::SiameseNet& net,
                      const std::vector<ProbePair>& probe, int cycle, std::uint64_t seed, const CycleOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  if (labeled.empty()) throw std::invalid_argument("run_cycle: empty labeled pool");
  if (images.size() != state.size()) throw std::invalid_argument("run_cycle: images not aligned with label state");

  CycleReport rep;
  rep.cycle = cycle;
  rep.probe_accuracy = probe_accuracy(net, probe);
  rep.gate_passed = !opt.gate || rep.probe_accuracy == 1.0;

  if (rep.gate_passed) {
    std::map<int, std::vector<std::size_t>> refs_by_class;
    for (std::size_t i = 0; i < labeled.size(); ++i) refs_by_class[labeled[i].class_index].push_back(i);

    // reference object per view, then one batched prediction per reference set
    auto rng = substream(seed, "pseudo.cycle." + std::to_string(cycle));
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < state.size(); ++i) {
      const auto& e = state[i];
      if (e.status == Status::labeled) continue;
      const auto it = refs_by_class.find(e.class_index);
      if (it == refs_by_class.end()) {
        ++rep.skipped;  // no labeled object of this class to compare against
        continue;
      }
      const auto& pool = it->second;
      groups[pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]].push_back(i);
    }
    for (const auto& [ref, members] : groups) {
      const double angle = std::uniform_real_distribution<double>(0.0, 360.0)(rng);
      std::vector<SilhouetteImage> queries;
      for (auto i : members) queries.push_back(images[i]);
      const auto preds = siam::predict_viewpoints(net, queries, labeled[ref].views, angle);
      for (std::size_t k = 0; k < members.size(); ++k) {
        const auto i = members[k];
        if (!preds[k] || !(preds[k]->confidence > opt.threshold)) {
          ++rep.skipped;
          continue;
        }
        const auto& before = state[i];
        if (before.status == Status::pseudo && *before.viewpoint != preds[k]->viewpoint) ++rep.overwritten;
        state.set_pseudo(i, preds[k]->viewpoint, preds[k]->confidence, cycle);
        ++rep.assigned;
      }
    }
  }
  rep.ratio = label_ratio(state);
  if (!truth.empty()) rep.accuracy = pseudo_accuracy(state, truth);
  rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

void append_cycle_log(const CycleReport& r, const std::filesystem::path& path) {
  nlohmann::json j = {{"cycle", r.cycle},           {"gate_passed", r.gate_passed}, {"probe_accuracy", r.probe_accuracy},
                      {"assigned", r.assigned},     {"skipped", r.skipped},         {"overwritten", r.overwritten},
                      {"ratio", r.ratio},           {"wall_ms", r.wall_ms}};
  j["accuracy"] = r.accuracy ? nlohmann::json(*r.accuracy) : nlohmann::json(nullptr);
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("pseudo log: cannot write " + path.string());
  out << j.dump() << '\n';
}

}  // namespace ssr::pseudo

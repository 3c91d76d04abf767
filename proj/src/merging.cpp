#include <crowdloc/merging.hpp>

#include <algorithm>
#include <numeric>
#include <optional>
#include <set>
#include <unordered_map>


namespace crowdloc {

  auto person_scale(const LocatedPerson& person) -> double
  {
    if (person.scale_px)
      return *person.scale_px;
    return (person.p_v - person.p_t).norm();
  }

  auto match_duplicates(std::span<const LocatedPerson> people,
                        const MergeConfig& cfg) -> Clusters
  {
    cfg.validate();
    const auto n = people.size();

    struct Candidate
    {
      double distance;
      int a;
      int b;
    };
    auto candidates = std::vector<Candidate>{};
    for (auto a = std::size_t{0}; a < n; ++a)
      for (auto b = a + 1; b < n; ++b)
      {
        const auto& pa = people[a];
        const auto& pb = people[b];
        if (pa.patch_id == pb.patch_id)
          continue;
        const auto distance = cfg.use_3d ? (pa.P_t - pb.P_t).norm()
                                         : (pa.p_t - pb.p_t).norm();
        const auto scale = cfg.use_3d
                               ? std::max(std::abs(pa.d), std::abs(pb.d))
                               : std::max(person_scale(pa), person_scale(pb));
        if (distance < cfg.radius_factor * scale)
          candidates.push_back({distance, int(a), int(b)});
      }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const auto& x, const auto& y) {
                       return x.distance < y.distance;
                     });

    // Union-find with the patch set of every root.
    auto parent = std::vector<int>(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto patches_of = std::vector<std::set<int>>(n);
    auto id_of = std::vector<std::optional<int>>(n);
    for (auto i = std::size_t{0}; i < n; ++i)
    {
      patches_of[i].insert(people[i].patch_id);
      if (cfg.use_ids)
        id_of[i] = people[i].id;
    }
    auto find = [&](int i) {
      while (parent[std::size_t(i)] != i)
        i = parent[std::size_t(i)] = parent[std::size_t(parent[std::size_t(i)])];
      return i;
    };

    for (const auto& c : candidates)
    {
      const auto ra = find(c.a);
      const auto rb = find(c.b);
      if (ra == rb)
        continue;
      auto& sa = patches_of[std::size_t(ra)];
      auto& sb = patches_of[std::size_t(rb)];
      const auto shared = std::any_of(sb.begin(), sb.end(),
                                      [&](int p) { return sa.count(p) > 0; });
      const auto& ia = id_of[std::size_t(ra)];
      const auto& ib = id_of[std::size_t(rb)];
      if (shared || (ia && ib && *ia != *ib))
        continue;
      const auto [root, child] = std::minmax(ra, rb);
      if (!id_of[std::size_t(root)])
        id_of[std::size_t(root)] = id_of[std::size_t(child)];
      parent[std::size_t(child)] = root;
      patches_of[std::size_t(root)].insert(patches_of[std::size_t(child)].begin(),
                                           patches_of[std::size_t(child)].end());
    }

    // Clusters ordered by their first member.
    auto index_of_root = std::unordered_map<int, std::size_t>{};
    auto clusters = Clusters{};
    for (auto i = std::size_t{0}; i < n; ++i)
    {
      const auto root = find(int(i));
      const auto [it, inserted] =
          index_of_root.try_emplace(root, clusters.size());
      if (inserted)
        clusters.emplace_back();
      clusters[it->second].push_back(int(i));
    }
    return clusters;
  }

  auto merge(std::span<const LocatedPerson> people, const Clusters& clusters,
             std::span<const Patch> patches) -> std::vector<LocatedPerson>
  {
    auto patch_by_id = std::unordered_map<int, const Patch*>{};
    for (const auto& p : patches)
      patch_by_id[p.id] = &p;
    auto lookup = [&](int id) -> const Patch& {
      const auto it = patch_by_id.find(id);
      if (it == patch_by_id.end())
        throw Error{ErrorCode::ConfigError,
                    "detection refers to unknown patch " + std::to_string(id)};
      return *it->second;
    };

    auto kept = std::vector<LocatedPerson>{};
    kept.reserve(clusters.size());
    for (const auto& cluster : clusters)
    {
      if (cluster.empty())
        throw Error{ErrorCode::Undefined, "empty duplicate cluster"};
      auto best = cluster.front();
      if (cluster.size() > 1)
      {
        auto best_margin = -std::numeric_limits<double>::infinity();
        auto best_size = -1;
        for (const auto i : cluster)
        {
          const auto& person = people[std::size_t(i)];
          const auto& patch = lookup(person.patch_id);
          const auto margin = patch.distance_to_border(person.p_t);
          if (margin > best_margin ||
              (margin == best_margin && patch.size > best_size))
          {
            best = i;
            best_margin = margin;
            best_size = patch.size;
          }
        }
      }
      kept.push_back(people[std::size_t(best)]);
    }
    return kept;
  }

  auto deduplicate(std::span<const LocatedPerson> people,
                   std::span<const Patch> patches, const MergeConfig& cfg)
      -> std::vector<LocatedPerson>
  {
    auto current = std::vector<LocatedPerson>(people.begin(), people.end());
    while (true)
    {
      const auto clusters = match_duplicates(current, cfg);
      if (clusters.size() == current.size())
        return current;
      current = merge(current, clusters, patches);
    }
  }

}  // namespace crowdloc

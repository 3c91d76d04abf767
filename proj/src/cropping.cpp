#include <crowdloc/cropping.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>


namespace crowdloc {

  namespace {

    // Left edges of blocks of size `block` tiling [0, width): regular steps
    // with the last block shifted left to stay inside the image.
    auto tile_positions(int width, int block) -> std::vector<int>
    {
      auto xs = std::vector<int>{};
      if (block >= width)
      {
        xs.push_back(0);
        return xs;
      }
      for (int x = 0; x < width; x += block)
        xs.push_back(std::min(x, width - block));
      xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
      return xs;
    }

    // Midpoints between consecutive base blocks.
    auto overlap_positions(const std::vector<int>& base) -> std::vector<int>
    {
      auto xs = std::vector<int>{};
      for (auto i = std::size_t{1}; i < base.size(); ++i)
      {
        const auto mid = (base[i - 1] + base[i]) / 2;
        if (mid != base[i - 1] && mid != base[i])
          xs.push_back(mid);
      }
      return xs;
    }

    auto emit_row(std::vector<Patch>& patches, int y, int size, int row,
                  int width, bool overlap_row) -> void
    {
      const auto base = tile_positions(width, size);
      for (const auto x : base)
        patches.push_back({int(patches.size()), x, y, size, row, overlap_row});
      for (const auto x : overlap_positions(base))
        patches.push_back({int(patches.size()), x, y, size, row, true});
    }

  }  // namespace

  auto CropParams::validate() const -> void
  {
    auto fail = [](const std::string& what) {
      throw Error{ErrorCode::ConfigError, "crop params: " + what};
    };
    if (!(h_top > 0) || !(h_bottom >= h_top))
      fail("need 0 < h_t <= h_b");
    if (!(b_upper < b_lower) || b_upper < 0 || b_lower > image_height)
      fail("need 0 <= b_u < b_l <= image height");
    if (image_width <= 0 || image_height <= 0)
      fail("image dimensions must be positive");
  }

  auto Patch::distance_to_border(const Pixeld& p) const -> double
  {
    const auto dx = std::min(p.x() - x, x + size - p.x());
    const auto dy = std::min(p.y() - y, y + size - p.y());
    return std::min(dx, dy);
  }

  auto geometric_sum(double first, double ratio, int count) -> double
  {
    auto sum = 0.;
    auto term = first;
    for (int i = 0; i < count; ++i)
    {
      sum += term;
      term *= ratio;
    }
    return sum;
  }

  auto solve_ratio(double first, double total, int count) -> double
  {
    if (count < 2 || !(total > first))
      throw Error{ErrorCode::LayoutInfeasible,
                  "no positive ratio for this row count"};
    if (std::abs(count * first - total) <= 1e-12 * total)
      return 1.;

    // The sum is increasing in q; for q > 1 it exceeds first * q^{n-1}.
    auto lo = 0.;
    auto hi = std::max(1., std::pow(total / first, 1. / (count - 1)));
    while (hi - lo > 1e-9 * std::max(1., hi))
    {
      const auto mid = 0.5 * (lo + hi);
      if (geometric_sum(first, mid, count) < total)
        lo = mid;
      else
        hi = mid;
    }
    return 0.5 * (lo + hi);
  }

  auto solve_layout(const CropParams& params) -> CropLayout
  {
    params.validate();
    const auto span = double(params.span());
    const auto first = 2 * params.h_top;
    const auto target = 2 * params.h_bottom;
    if (span < first)
      throw Error{ErrorCode::LayoutInfeasible,
                  "band shorter than one top block"};

    const auto max_rows = int(std::ceil(span / first));
    auto best_rows = 0;
    auto best_ratio = 1.;
    auto best_objective = std::numeric_limits<double>::infinity();
    for (int n = 1; n <= max_rows; ++n)
    {
      auto q = 1.;
      if (n == 1)
      {
        // A single row only fits when the band is one top block tall.
        if (std::abs(span - first) > 1.)
          continue;
      }
      else
      {
        if (!(span > first))
          continue;
        q = solve_ratio(first, span, n);
      }
      const auto objective = std::abs(first * std::pow(q, n - 1) - target);
      if (objective < best_objective - 1e-9)
      {
        best_rows = n;
        best_ratio = q;
        best_objective = objective;
      }
    }
    if (best_rows == 0)
      throw Error{ErrorCode::LayoutInfeasible, "no feasible row count"};

    auto layout = CropLayout{best_rows, best_ratio, {}, 0.};
    auto used = 0;
    for (int i = 0; i + 1 < best_rows; ++i)
    {
      const auto c = int(std::lround(first * std::pow(best_ratio, i)));
      layout.sizes.push_back(c);
      used += c;
    }
    layout.sizes.push_back(params.span() - used);
    layout.objective = std::abs(layout.sizes.back() - target);
    return layout;
  }

  auto generate_patches(const CropLayout& layout, const CropParams& params)
      -> std::vector<Patch>
  {
    auto patches = std::vector<Patch>{};
    const auto width = params.image_width;

    auto row_top = std::vector<int>{};
    auto y = params.b_upper;
    for (const auto c : layout.sizes)
    {
      row_top.push_back(y);
      y += c;
    }

    for (auto i = std::size_t{0}; i < layout.sizes.size(); ++i)
      emit_row(patches, row_top[i], layout.sizes[i], int(i), width, false);

    for (auto i = std::size_t{0}; i + 1 < layout.sizes.size(); ++i)
    {
      const auto upper = layout.sizes[i];
      const auto lower = layout.sizes[i + 1];
      const auto size = (upper + lower) / 2;
      const auto top = row_top[i + 1] - upper / 2;
      emit_row(patches, top, size, int(i), width, true);
    }
    return patches;
  }

  auto uniform_layout(const CropParams& params, int block)
      -> std::vector<Patch>
  {
    if (block <= 0)
      throw Error{ErrorCode::ConfigError, "uniform block must be positive"};
    params.validate();

    auto tops = std::vector<int>{};
    for (int y = params.b_upper; y < params.b_lower; y += block)
      tops.push_back(std::max(0, std::min(y, params.b_lower - block)));
    tops.erase(std::unique(tops.begin(), tops.end()), tops.end());

    auto patches = std::vector<Patch>{};
    for (auto i = std::size_t{0}; i < tops.size(); ++i)
      emit_row(patches, tops[i], block, int(i), params.image_width, false);
    for (auto i = std::size_t{0}; i + 1 < tops.size(); ++i)
    {
      const auto mid = (tops[i] + tops[i + 1]) / 2;
      if (mid != tops[i] && mid != tops[i + 1])
        emit_row(patches, mid, block, int(i), params.image_width, true);
    }
    return patches;
  }

  auto cropping_score(std::span<const Box> people,
                      std::span<const Patch> patches) -> double
  {
    if (people.empty())
      throw Error{ErrorCode::Undefined, "cropping score of an empty crowd"};

    const auto appropriate = std::count_if(
        people.begin(), people.end(), [&](const Box& b) {
          return std::any_of(
              patches.begin(), patches.end(), [&](const Patch& p) {
                const auto ratio = b.h / p.size;
                const auto inside = b.x >= p.x && b.y >= p.y &&
                                    b.x + b.w <= p.x + p.size &&
                                    b.y + b.h <= p.y + p.size;
                return inside && ratio >= 0.3 && ratio <= 0.8;
              });
        });
    return double(appropriate) / double(people.size());
  }

  auto estimate_crop_params(std::span<const Box> boxes, int image_width,
                            int image_height) -> CropParams
  {
    if (boxes.size() < 2)
      throw Error{ErrorCode::InsufficientData,
                  "need at least two boxes to estimate crop parameters"};

    auto fit = [](const std::vector<const Box*>& sample) {
      // Least squares h = a + b * bottom.
      auto n = double(sample.size());
      auto sx = 0., sy = 0., sxx = 0., sxy = 0.;
      for (const auto* b : sample)
      {
        sx += b->bottom();
        sy += b->h;
        sxx += b->bottom() * b->bottom();
        sxy += b->bottom() * b->h;
      }
      const auto det = n * sxx - sx * sx;
      const auto slope = det > 0 ? (n * sxy - sx * sy) / det : 0.;
      const auto intercept = (sy - slope * sx) / n;
      return std::pair{intercept, slope};
    };

    auto sample = std::vector<const Box*>{};
    for (const auto& b : boxes)
      sample.push_back(&b);
    auto [a, b] = fit(sample);

    // One trimming round: drop residuals beyond 3 scaled MADs.
    auto residuals = std::vector<double>{};
    for (const auto* box : sample)
      residuals.push_back(std::abs(box->h - (a + b * box->bottom())));
    auto sorted = residuals;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2,
                     sorted.end());
    const auto mad = 1.4826 * sorted[sorted.size() / 2];
    if (mad > 0)
    {
      auto kept = std::vector<const Box*>{};
      for (auto i = std::size_t{0}; i < sample.size(); ++i)
        if (residuals[i] <= 3 * mad)
          kept.push_back(sample[i]);
      if (kept.size() >= 2)
        std::tie(a, b) = fit(kept);
    }

    auto top = std::numeric_limits<double>::infinity();
    auto bottom = -std::numeric_limits<double>::infinity();
    auto lowest_foot = std::numeric_limits<double>::infinity();
    auto highest_foot = -std::numeric_limits<double>::infinity();
    auto smallest = std::numeric_limits<double>::infinity();
    auto largest = 0.;
    for (const auto& box : boxes)
    {
      top = std::min(top, box.y);
      bottom = std::max(bottom, box.bottom());
      lowest_foot = std::min(lowest_foot, box.bottom());
      highest_foot = std::max(highest_foot, box.bottom());
      smallest = std::min(smallest, box.h);
      largest = std::max(largest, box.h);
    }

    auto params = CropParams{};
    params.image_width = image_width;
    params.image_height = image_height;
    params.b_upper = std::clamp(int(std::floor(top)), 0, image_height - 1);
    params.b_lower =
        std::clamp(int(std::ceil(bottom)), params.b_upper + 1, image_height);
    // Keep the fit inside the observed range of heights.
    params.h_top = std::clamp(a + b * lowest_foot, smallest, largest);
    params.h_bottom =
        std::clamp(a + b * highest_foot, params.h_top, std::max(largest, 1.));
    params.h_top = std::max(params.h_top, 1.);
    params.h_bottom = std::max(params.h_bottom, params.h_top);

    // The band must hold at least one top block.
    const auto min_span = int(std::ceil(2 * params.h_top));
    if (params.span() < min_span)
    {
      params.b_lower = std::min(image_height, params.b_upper + min_span);
      params.b_upper = std::max(0, params.b_lower - min_span);
    }
    return params;
  }

}  // namespace crowdloc

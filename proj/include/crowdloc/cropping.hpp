#pragma once

#include <crowdloc/geometry.hpp>

#include <span>
#include <vector>


namespace crowdloc {

  //! Person heights (pixels) at the top and bottom of the processed band
  //! [b_u, b_l) of rows, plus the image size.
  struct CropParams
  {
    double h_top;
    double h_bottom;
    int b_upper;
    int b_lower;
    int image_width;
    int image_height;

    auto span() const -> int
    {
      return b_lower - b_upper;
    }

    //! Throws ConfigError when the invariants do not hold.
    auto validate() const -> void;
  };

  //! Rows of square blocks whose sizes follow a geometric sequence.
  struct CropLayout
  {
    int rows;
    double ratio;
    //! Integer block sizes, top to bottom; they sum to the band height.
    std::vector<int> sizes;
    //! |c_n - 2 h_b| evaluated on the integer sizes.
    double objective;
  };

  struct Patch
  {
    int id;
    int x;
    int y;
    int size;
    int row;
    bool overlap;

    //! Upper-left corner in the global frame.
    auto t_crop() const -> Pixeld
    {
      return {double(x), double(y)};
    }

    auto center() const -> Pixeld
    {
      return {x + 0.5 * size, y + 0.5 * size};
    }

    auto contains(const Pixeld& p) const -> bool
    {
      return p.x() >= x && p.x() <= x + size && p.y() >= y &&
             p.y() <= y + size;
    }

    //! Smallest distance from p to the patch border; negative when outside.
    auto distance_to_border(const Pixeld& p) const -> double;
  };

  //! Axis-aligned image box [x, x+w] × [y, y+h].
  struct Box
  {
    double x;
    double y;
    double w;
    double h;

    auto bottom() const -> double
    {
      return y + h;
    }
  };

  //! Sum of the geometric sequence c1, c1 q, ..., c1 q^{n-1}.
  auto geometric_sum(double first, double ratio, int count) -> double;

  //! Unique positive ratio q with geometric_sum(first, q, count) == total;
  //! bisection to 1e-9. Requires count >= 2 and total > first.
  auto solve_ratio(double first, double total, int count) -> double;

  //! Picks (n, q) minimizing |c_n - 2 h_b| subject to c_1 = 2 h_t and
  //! Σ c_i = b_l - b_u. Ties go to the smaller n.
  auto solve_layout(const CropParams& params) -> CropLayout;

  //! Base blocks of every row, half-shifted horizontal overlap blocks, and
  //! blocks of size (c_i + c_{i+1}) / 2 straddling each row boundary.
  auto generate_patches(const CropLayout& layout, const CropParams& params)
      -> std::vector<Patch>;

  //! Constant-size grid over the same band with the same overlap rule.
  auto uniform_layout(const CropParams& params, int block)
      -> std::vector<Patch>;

  inline auto local_to_global(const Pixeld& p_local, const Patch& patch)
      -> Pixeld
  {
    return p_local + patch.t_crop();
  }

  inline auto global_to_local(const Pixeld& p, const Patch& patch) -> Pixeld
  {
    return p - patch.t_crop();
  }

  //! Fraction of people with height/patch size in [0.3, 0.8] for at least one
  //! patch fully containing their box.
  auto cropping_score(std::span<const Box> people,
                      std::span<const Patch> patches) -> double;

  //! Crop parameters from annotated boxes: robust line fit of box height
  //! against the box bottom row, evaluated at the band limits.
  auto estimate_crop_params(std::span<const Box> boxes, int image_width,
                            int image_height) -> CropParams;

}  // namespace crowdloc

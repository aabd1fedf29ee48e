#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "slsnet/image_io.hpp"
#include "slsnet/ops.hpp"
#include "slsnet/tensor.hpp"

namespace slsnet {

/// One image/mask pair. image is (1, 3, s, s) in [0, 1]; mask is (1, 1, s, s)
/// in {0, 1}, or undefined for unlabeled inputs.
struct Sample {
  std::string id;
  Tensor image;
  Tensor mask;
};

// Raster <-> tensor conversion. Gray images are replicated to three channels.
Tensor image_to_tensor(const Image8& img);
/// Masks read as value / 255; RGB masks are averaged over channels.
Tensor mask_to_tensor(const Image8& img);
/// (1, 3, h, w) in [0, 1] -> 8-bit RGB.
Image8 tensor_to_image(const Tensor& image);
/// (1, 1, h, w) binary -> 0/255 gray.
Image8 mask_to_image(const Tensor& mask);

/// Loads and resizes bilinearly to target_size x target_size. The mask is
/// binarized at 0.5 after resizing. An empty mask_path yields an unlabeled sample.
Sample load_sample(const std::filesystem::path& image_path,
                   const std::filesystem::path& mask_path, std::size_t target_size);

struct ClaheParams {
  double clip_limit = 2.0;
  std::size_t tiles = 8;  // tiles per side
};

struct AugmentOps {
  bool hflip = false;
  bool vflip = false;
  std::optional<double> gamma;
  std::optional<ClaheParams> clahe;

  /// "hflip+vflip+gamma0.7", "identity", ...
  std::string label() const;
};

/// Flips act on image and mask together; gamma (v -> v^g) and CLAHE only on
/// the image. Throws ConfigError for g <= 0, clip < 1 or tiles < 1.
Sample augment(const Sample& s, const AugmentOps& ops);

/// Contrast-limited adaptive histogram equalisation of the luminance of a
/// (1, 3, h, w) image; chrominance is kept.
Tensor clahe(const Tensor& image, const ClaheParams& p);

inline constexpr double kAugmentGammas[] = {0.7, 1.0, 1.5};

/// The eight augmentation recipes: each flip combination paired once with a
/// gamma drawn from kAugmentGammas and once with CLAHE.
std::vector<AugmentOps> expansion_recipes(Rng& rng);
/// Applies expansion_recipes to every sample (8x the input size).
std::vector<Sample> expand_dataset(const std::vector<Sample>& samples, Rng& rng);

struct Ellipse {
  double cx = 0, cy = 0;  // centre in pixel units, origin at the top-left corner
  double a = 1, b = 1;    // semi-axes
  double theta = 0;       // rotation of the a axis, radians
};

/// Whether point (x, y) lies inside or on the ellipse.
bool ellipse_contains(const Ellipse& e, double x, double y);

struct SyntheticSample {
  Sample sample;
  std::vector<Ellipse> lesions;
};

/// Noisy skin-toned backgrounds with one or two darker soft-edged ellipses.
/// The mask marks pixels whose centre (x + 0.5, y + 0.5) lies inside a lesion.
/// Output is a pure function of the arguments.
std::vector<SyntheticSample> synthesize_disk_dataset(std::size_t n, std::size_t size,
                                                     std::uint64_t seed);
std::vector<Sample> synthesize_samples(std::size_t n, std::size_t size, std::uint64_t seed);

/// Index lists for one epoch. The last batch may be short.
std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size,
                                                   bool shuffle, Rng& rng);

/// Concatenates the selected samples along the batch axis.
std::pair<Tensor, Tensor> collate(const std::vector<Sample>& samples,
                                  const std::vector<std::size_t>& indices);

struct ManifestEntry {
  std::filesystem::path image;
  std::filesystem::path mask;  // empty when unlabeled
  std::string note;            // optional third column, e.g. the augmentation recipe
};

/// `image<TAB>mask[<TAB>note]` per line, mask `-` when absent, `#` comments.
/// Relative paths resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

std::vector<Sample> load_manifest(const std::filesystem::path& path, std::size_t target_size);

}  // namespace slsnet

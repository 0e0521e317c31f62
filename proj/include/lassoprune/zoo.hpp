#pragma once

// Reference manifests for the architectures used in accounting checks.

#include <string>
#include <string_view>
#include <vector>

#include "lassoprune/interchange.hpp"

namespace lassoprune {

/// vgg16-cifar, resnet56-cifar, resnet110-cifar, googlenet-cifar, resnet50-imagenet
std::vector<std::string> zoo_names();

/// Throws InvalidConfig for an unknown name.
ModelManifest zoo_manifest(std::string_view name);

ModelManifest vgg16_cifar();
/// CIFAR ResNet with `blocks_per_stage` basic blocks per stage; stage
/// transitions use 1x1 projection shortcuts.
ModelManifest resnet_cifar(int blocks_per_stage);
ModelManifest googlenet_cifar();
ModelManifest resnet50_imagenet();

}  // namespace lassoprune

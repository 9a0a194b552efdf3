#pragma once

#include "rwt/association.hpp"
#include "rwt/binary_io.hpp"
#include "rwt/config.hpp"
#include "rwt/dataset_io.hpp"
#include "rwt/descriptor.hpp"
#include "rwt/error.hpp"
#include "rwt/evaluation.hpp"
#include "rwt/feature_mask.hpp"
#include "rwt/geometry.hpp"
#include "rwt/matching.hpp"
#include "rwt/pipeline.hpp"
#include "rwt/rng.hpp"
#include "rwt/se3.hpp"
#include "rwt/tracking.hpp"
#include "rwt/types.hpp"
#include "rwt/vocabulary.hpp"

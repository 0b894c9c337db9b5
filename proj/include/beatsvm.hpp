#pragma once

#include "beatsvm/beats.hpp"
#include "beatsvm/dataset.hpp"
#include "beatsvm/error.hpp"
#include "beatsvm/io.hpp"
#include "beatsvm/kernel.hpp"
#include "beatsvm/matrix.hpp"
#include "beatsvm/motion.hpp"
#include "beatsvm/parallel.hpp"
#include "beatsvm/report.hpp"
#include "beatsvm/rng.hpp"
#include "beatsvm/selection.hpp"
#include "beatsvm/shap.hpp"
#include "beatsvm/svm.hpp"
#include "beatsvm/synthetic.hpp"

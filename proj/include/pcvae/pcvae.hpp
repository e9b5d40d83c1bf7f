#pragma once

#include "pcvae/acquisition.hpp"
#include "pcvae/adam.hpp"
#include "pcvae/autodiff.hpp"
#include "pcvae/checkpoint.hpp"
#include "pcvae/config.hpp"
#include "pcvae/dataio.hpp"
#include "pcvae/error.hpp"
#include "pcvae/evalkit.hpp"
#include "pcvae/flows.hpp"
#include "pcvae/gaussian.hpp"
#include "pcvae/missingness.hpp"
#include "pcvae/model.hpp"
#include "pcvae/nn.hpp"
#include "pcvae/objectives.hpp"
#include "pcvae/params.hpp"
#include "pcvae/rng.hpp"
#include "pcvae/svg.hpp"
#include "pcvae/tensor.hpp"
#include "pcvae/trainer.hpp"

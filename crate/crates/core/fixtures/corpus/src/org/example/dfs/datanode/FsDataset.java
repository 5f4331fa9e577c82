package org.example.dfs.datanode;

import java.io.File;
import org.example.dfs.Block;
import org.example.dfs.util.Paths;
import org.slf4j.Logger;
import org.slf4j.LoggerFactory;

public class FsDataset {
    private static final Logger LOG = LoggerFactory.getLogger(FsDataset.class);

    private final String storageDir;

    public FsDataset(String storageDir) {
        this.storageDir = storageDir;
    }

    public String getStorageDir() {
        return storageDir;
    }

    public void finalizeBlock(Block b) {
        String path = Paths.blockFile(storageDir, b.getBlockId());
        LOG.info("Finalized block " + b + " at " + path);
    }

    public void deleteBlock(Block b) {
        File f = new File(Paths.blockFile(storageDir, b.getBlockId()));
        if (!f.delete()) {
            LOG.warn("Unexpected error trying to delete block " + b + ". BlockInfo not found in volumeMap.");
            return;
        }
        LOG.info("Deleting block " + b + " file " + f);
    }

    public boolean isValid(Block b) {
        return b != null && b.getNumBytes() >= 0;
    }
}
